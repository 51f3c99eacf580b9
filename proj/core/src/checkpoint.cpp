#include "atnl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "atnl/errors.hpp"

namespace atnl {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'N', 'L'};
constexpr std::uint32_t kVersion = 1;
const std::string kConfigName = "__config__";

struct RawRecord {
  std::string name;
  std::vector<std::uint32_t> extents;
  std::vector<float> payload;   // parameter records
  std::string config_text;      // only for the __config__ record
};

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xffu));
  out.push_back(static_cast<char>((v >> 8) & 0xffu));
  out.push_back(static_cast<char>((v >> 16) & 0xffu));
  out.push_back(static_cast<char>((v >> 24) & 0xffu));
}

void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Cursor {
 public:
  Cursor(const std::string& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    }
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("truncated checkpoint: " + path_);
    }
  }

  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw CheckpointError("write failed: " + path);
}

// The __config__ record reuses the record framing but its payload is the raw
// UTF-8 text, not floats; its single extent is the byte count.
std::vector<RawRecord> read_records(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  Cursor cur(bytes, path);
  const std::string magic = cur.take(4);
  if (magic != std::string(kMagic, 4)) {
    throw CheckpointError("bad magic in checkpoint: " + path);
  }
  const std::uint32_t version = cur.u32();
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version) + ": " + path);
  }
  const std::uint32_t count = cur.u32();
  std::vector<RawRecord> records;
  records.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    RawRecord rec;
    const std::uint32_t name_len = cur.u32();
    rec.name = cur.take(name_len);
    const std::uint32_t rank = cur.u32();
    std::uint64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t e = cur.u32();
      if (e == 0) throw CheckpointError("zero extent in record '" + rec.name + "': " + path);
      rec.extents.push_back(e);
      n *= e;
    }
    if (rec.name == kConfigName) {
      if (rank != 1) {
        throw CheckpointError("malformed __config__ record: " + path);
      }
      rec.config_text = cur.take(rec.extents[0]);
    } else {
      rec.payload.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) rec.payload.push_back(cur.f32());
    }
    records.push_back(std::move(rec));
  }
  if (!cur.done()) throw CheckpointError("trailing bytes in checkpoint: " + path);
  return records;
}

std::string encode_records(const std::vector<RawRecord>& records) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const RawRecord& rec : records) {
    put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out += rec.name;
    put_u32(out, static_cast<std::uint32_t>(rec.extents.size()));
    for (std::uint32_t e : rec.extents) put_u32(out, e);
    if (rec.name == kConfigName) {
      out += rec.config_text;
    } else {
      for (float f : rec.payload) put_f32(out, f);
    }
  }
  return out;
}

std::string shape_of(const RawRecord& rec) {
  std::vector<std::size_t> s(rec.extents.begin(), rec.extents.end());
  return shape_to_string(s);
}

}  // namespace

void save_checkpoint(const std::string& path, const TransformerParams& params,
                     const std::vector<KeyValue>& extra) {
  std::vector<RawRecord> records;
  for (const auto& [name, tensor] : params.named_parameters()) {
    RawRecord rec;
    rec.name = name;
    for (std::size_t e : tensor.shape()) {
      rec.extents.push_back(static_cast<std::uint32_t>(e));
    }
    rec.payload.reserve(tensor.numel());
    for (double v : tensor.values()) rec.payload.push_back(static_cast<float>(v));
    records.push_back(std::move(rec));
  }
  RawRecord cfg;
  cfg.name = kConfigName;
  cfg.config_text = model_config_to_text(params.config());
  for (const KeyValue& kv : extra) {
    cfg.config_text += kv.key + " = " + kv.value + "\n";
  }
  cfg.extents.push_back(static_cast<std::uint32_t>(cfg.config_text.size()));
  records.push_back(std::move(cfg));
  write_file_bytes(path, encode_records(records));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::vector<RawRecord> records = read_records(path);

  const RawRecord* cfg_rec = nullptr;
  for (const RawRecord& rec : records) {
    if (rec.name == kConfigName) {
      if (cfg_rec != nullptr) {
        throw CheckpointError("duplicate __config__ record: " + path);
      }
      cfg_rec = &rec;
    }
  }
  if (cfg_rec == nullptr) {
    throw CheckpointError("missing __config__ record: " + path);
  }

  LoadedCheckpoint out{TransformerParams::zeroed(model_config_from_text(cfg_rec->config_text)),
                       parse_key_values(cfg_rec->config_text)};

  std::unordered_map<std::string, const RawRecord*> by_name;
  for (const RawRecord& rec : records) {
    if (rec.name == kConfigName) continue;
    if (!by_name.emplace(rec.name, &rec).second) {
      throw CheckpointError("duplicate record '" + rec.name + "': " + path);
    }
  }

  std::size_t used = 0;
  for (const auto& [name, tensor] : out.params.named_parameters()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError("missing record '" + name + "': " + path);
    }
    const RawRecord& rec = *it->second;
    bool shape_ok = rec.extents.size() == tensor.rank();
    for (std::size_t i = 0; shape_ok && i < tensor.rank(); ++i) {
      shape_ok = rec.extents[i] == tensor.shape()[i];
    }
    if (!shape_ok) {
      throw CheckpointError("record '" + name + "' has shape " + shape_of(rec) +
                            ", model expects " + tensor.shape_str() + ": " + path);
    }
    // named_parameters() returns const refs; shallow-copy to reach storage.
    Tensor dst = tensor;
    for (std::size_t i = 0; i < rec.payload.size(); ++i) {
      dst.values()[i] = static_cast<double>(rec.payload[i]);
    }
    ++used;
  }
  if (used != by_name.size()) {
    for (const auto& [name, rec] : by_name) {
      bool known = false;
      for (const auto& [pname, t] : out.params.named_parameters()) {
        if (pname == name) { known = true; break; }
      }
      if (!known) {
        throw CheckpointError("unexpected record '" + name + "': " + path);
      }
    }
  }
  return out;
}

void average_checkpoints(const std::vector<std::string>& inputs,
                         const std::string& output) {
  if (inputs.empty()) {
    throw ContractError("average_checkpoints needs at least one input");
  }
  std::vector<RawRecord> base = read_records(inputs[0]);
  std::vector<std::vector<double>> sums(base.size());
  for (std::size_t r = 0; r < base.size(); ++r) {
    sums[r].assign(base[r].payload.size(), 0.0);
    for (std::size_t i = 0; i < base[r].payload.size(); ++i) {
      sums[r][i] = static_cast<double>(base[r].payload[i]);
    }
  }
  for (std::size_t f = 1; f < inputs.size(); ++f) {
    std::vector<RawRecord> records = read_records(inputs[f]);
    if (records.size() != base.size()) {
      throw CheckpointError("record count mismatch between " + inputs[0] +
                            " and " + inputs[f]);
    }
    for (std::size_t r = 0; r < records.size(); ++r) {
      const RawRecord& a = base[r];
      const RawRecord& b = records[r];
      if (a.name != b.name || a.extents != b.extents) {
        throw CheckpointError("record layout mismatch at '" + a.name +
                              "' between " + inputs[0] + " and " + inputs[f]);
      }
      if (a.name == kConfigName) {
        if (a.config_text != b.config_text) {
          throw CheckpointError("config mismatch between " + inputs[0] +
                                " and " + inputs[f]);
        }
        continue;
      }
      for (std::size_t i = 0; i < b.payload.size(); ++i) {
        sums[r][i] += static_cast<double>(b.payload[i]);
      }
    }
  }
  const double k = static_cast<double>(inputs.size());
  for (std::size_t r = 0; r < base.size(); ++r) {
    if (base[r].name == kConfigName) continue;
    for (std::size_t i = 0; i < base[r].payload.size(); ++i) {
      base[r].payload[i] = static_cast<float>(sums[r][i] / k);
    }
  }
  write_file_bytes(output, encode_records(base));
}

}  // namespace atnl
