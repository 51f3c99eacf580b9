#pragma once

#include <string>
#include <vector>

#include "atnl/kv.hpp"
#include "atnl/model.hpp"

namespace atnl {

// Binary parameter snapshot. Layout: magic "ATNL", u32 version, u32 record
// count, then records of (u32 name_len, name bytes, u32 rank, u32 extents[],
// little-endian f32 payload, row major). The final record is always named
// "__config__" and carries the model configuration plus any extra key=value
// metadata as raw UTF-8 text; its payload is the byte string itself.

struct LoadedCheckpoint {
    TransformerParams params;
    std::vector<KeyValue> config;  // every key=value line from __config__
};

void save_checkpoint(const std::string& path, const TransformerParams& params,
                     const std::vector<KeyValue>& extra = {});

LoadedCheckpoint load_checkpoint(const std::string& path);

// Elementwise mean over parameter records, written as a new checkpoint.
// Inputs must agree on config text, record names and shapes. The mean is
// accumulated in double and rounded once to f32 per element.
void average_checkpoints(const std::vector<std::string>& inputs,
                         const std::string& output);

}  // namespace atnl
