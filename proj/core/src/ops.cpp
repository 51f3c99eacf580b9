#include "atnl/ops.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "atnl/errors.hpp"

namespace atnl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// c[m x n] += a[m x k] * b[k x n]
void mm_into(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void mm_nt_into(const double* g, const double* b, double* c, std::size_t m,
                std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      crow[p] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void mm_tn_into(const double* a, const double* g, double* c, std::size_t m,
                std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

bool want(const Graph& g, const Tensor& out) {
  return g.recording() && out.requires_grad();
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch, " + a.shape_str() +
                     " vs " + b.shape_str());
}

// Shared softmax kernel. allowed may be empty (everything allowed); entries
// that are disallowed or -inf come out exactly 0. Throws if a row has no
// finite allowed entry.
void softmax_rows_into(const std::vector<double>& x,
                       std::span<const std::uint8_t> allowed, std::size_t rows,
                       std::size_t cols, std::vector<double>& out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = x.data() + i * cols;
    double* orow = out.data() + i * cols;
    double mx = kNegInf;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!allowed.empty() && !allowed[i * cols + j]) continue;
      if (row[j] > mx) mx = row[j];
    }
    if (!std::isfinite(mx))
      throw DegenerateInputError("softmax: row " + std::to_string(i) +
                                 " has no finite allowed entry");
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const bool ok = allowed.empty() || allowed[i * cols + j];
      const double e = ok ? std::exp(row[j] - mx) : 0.0;
      orow[j] = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) orow[j] *= inv;
  }
}

// softmax backward: dx_j = s_j * (g_j - sum_k g_k s_k), per row. Entries
// with s_j == 0 (masked or -inf) get exactly 0.
void softmax_backward_rows(std::span<const double> go,
                           const std::vector<double>& s, std::size_t rows,
                           std::size_t cols, std::vector<double>& gx) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* grow = go.data() + i * cols;
    const double* srow = s.data() + i * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += grow[j] * srow[j];
    double* xrow = gx.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j)
      xrow[j] += srow[j] * (grow[j] - dot);
  }
}

Tensor softmax_rows_impl(Graph& g, const Tensor& x,
                         std::vector<std::uint8_t> allowed) {
  if (x.rank() != 2)
    throw ShapeError("softmax_rows: expected rank 2, got " + x.shape_str());
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros({rows, cols}, x.requires_grad());
  softmax_rows_into(x.values(), allowed, rows, cols, out.values());
  if (want(g, out)) {
    g.record({x}, out, [x, out, rows, cols](AdjointStore& ctx) {
      softmax_backward_rows(ctx.of(out), out.values(), rows, cols,
                            ctx.accum(x));
    });
  }
  return out;
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expected rank-2 operands, got " + a.shape_str() +
                     " and " + b.shape_str());
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner extents differ, " + a.shape_str() + " x " +
                     b.shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out =
      Tensor::zeros({m, n}, a.requires_grad() || b.requires_grad());
  mm_into(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  if (want(g, out)) {
    g.record({a, b}, out, [a, b, out, m, k, n](AdjointStore& ctx) {
      auto go = ctx.of(out);
      if (a.requires_grad())
        mm_nt_into(go.data(), b.values().data(), ctx.accum(a).data(), m, n, k);
      if (b.requires_grad())
        mm_tn_into(a.values().data(), go.data(), ctx.accum(b).data(), m, k, n);
    });
  }
  return out;
}

Tensor transpose(Graph& g, const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m}, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.values()[j * m + i] = a.values()[i * n + j];
  if (want(g, out)) {
    g.record({a}, out, [a, out, m, n](AdjointStore& ctx) {
      auto go = ctx.of(out);
      auto& ga = ctx.accum(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
  }
  return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] + b.values()[i];
  Tensor out(a.shape(), std::move(v), a.requires_grad() || b.requires_grad());
  if (want(g, out)) {
    g.record({a, b}, out, [a, b, out](AdjointStore& ctx) {
      auto go = ctx.of(out);
      if (a.requires_grad()) {
        auto& ga = ctx.accum(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = ctx.accum(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] * b.values()[i];
  Tensor out(a.shape(), std::move(v), a.requires_grad() || b.requires_grad());
  if (want(g, out)) {
    g.record({a, b}, out, [a, b, out](AdjointStore& ctx) {
      auto go = ctx.of(out);
      if (a.requires_grad()) {
        auto& ga = ctx.accum(a);
        for (std::size_t i = 0; i < ga.size(); ++i)
          ga[i] += go[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto& gb = ctx.accum(b);
        for (std::size_t i = 0; i < gb.size(); ++i)
          gb[i] += go[i] * a.values()[i];
      }
    });
  }
  return out;
}

Tensor scale(Graph& g, const Tensor& a, double c) {
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
  Tensor out(a.shape(), std::move(v), a.requires_grad());
  if (want(g, out)) {
    g.record({a}, out, [a, out, c](AdjointStore& ctx) {
      auto go = ctx.of(out);
      auto& ga = ctx.accum(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * c;
    });
  }
  return out;
}

Tensor add_row_bias(Graph& g, const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2)
    throw ShapeError("add_row_bias: expected rank-2 input, got " +
                     x.shape_str());
  if (bias.rank() != 1 || bias.shape()[0] != x.cols())
    throw ShapeError("add_row_bias: bias " + bias.shape_str() +
                     " does not match input " + x.shape_str());
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      v[i * d + j] = x.values()[i * d + j] + bias.values()[j];
  Tensor out({n, d}, std::move(v),
             x.requires_grad() || bias.requires_grad());
  if (want(g, out)) {
    g.record({x, bias}, out, [x, bias, out, n, d](AdjointStore& ctx) {
      auto go = ctx.of(out);
      if (x.requires_grad()) {
        auto& gx = ctx.accum(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
      }
      if (bias.requires_grad()) {
        auto& gb = ctx.accum(bias);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
      }
    });
  }
  return out;
}

Tensor relu(Graph& g, const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  Tensor out(x.shape(), std::move(v), x.requires_grad());
  if (want(g, out)) {
    g.record({x}, out, [x, out](AdjointStore& ctx) {
      auto go = ctx.of(out);
      auto& gx = ctx.accum(x);
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (x.values()[i] > 0.0) gx[i] += go[i];
    });
  }
  return out;
}

Tensor softmax_rows(Graph& g, const Tensor& x) {
  return softmax_rows_impl(g, x, {});
}

Tensor softmax_rows_allowed(Graph& g, const Tensor& x,
                            std::vector<std::uint8_t> allowed) {
  if (allowed.size() != x.numel())
    throw ShapeError("softmax_rows_allowed: mask size " +
                     std::to_string(allowed.size()) + " vs input " +
                     x.shape_str());
  return softmax_rows_impl(g, x, std::move(allowed));
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps) {
  if (eps <= 0.0)
    throw ConfigError("layer_norm: eps must be positive, got " +
                      std::to_string(eps));
  if (x.rank() != 1 && x.rank() != 2)
    throw ShapeError("layer_norm: expected rank 1 or 2, got " + x.shape_str());
  const std::size_t d = x.shape().back();
  const std::size_t n = x.numel() / d;
  if (gain.rank() != 1 || gain.shape()[0] != d || bias.rank() != 1 ||
      bias.shape()[0] != d)
    throw ShapeError("layer_norm: gain " + gain.shape_str() + " / bias " +
                     bias.shape_str() + " do not match input " + x.shape_str());

  std::vector<double> xhat(n * d);
  std::vector<double> inv_s(n);
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_s[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv;
      xhat[i * d + j] = h;
      v[i * d + j] = gain.values()[j] * h + bias.values()[j];
    }
  }
  Tensor out(x.shape(), std::move(v),
             x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  if (want(g, out)) {
    g.record({x, gain, bias}, out,
             [x, gain, bias, out, xhat = std::move(xhat),
              inv_s = std::move(inv_s), n, d](AdjointStore& ctx) {
               auto go = ctx.of(out);
               for (std::size_t i = 0; i < n; ++i) {
                 const double* grow = go.data() + i * d;
                 const double* hrow = xhat.data() + i * d;
                 if (x.requires_grad()) {
                   double mh = 0.0, mhx = 0.0;
                   for (std::size_t j = 0; j < d; ++j) {
                     const double h = grow[j] * gain.values()[j];
                     mh += h;
                     mhx += h * hrow[j];
                   }
                   mh /= static_cast<double>(d);
                   mhx /= static_cast<double>(d);
                   auto& gx = ctx.accum(x);
                   for (std::size_t j = 0; j < d; ++j) {
                     const double h = grow[j] * gain.values()[j];
                     gx[i * d + j] += (h - mh - hrow[j] * mhx) * inv_s[i];
                   }
                 }
                 if (gain.requires_grad()) {
                   auto& gg = ctx.accum(gain);
                   for (std::size_t j = 0; j < d; ++j)
                     gg[j] += grow[j] * hrow[j];
                 }
                 if (bias.requires_grad()) {
                   auto& gb = ctx.accum(bias);
                   for (std::size_t j = 0; j < d; ++j) gb[j] += grow[j];
                 }
               }
             });
  }
  return out;
}

Tensor dropout(Graph& g, const Tensor& x, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout: p must be in [0, 1), got " +
                      std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return x;

  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.next_double() >= p ? keep_scale : 0.0;

  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] * mask[i];
  Tensor out(x.shape(), std::move(v), x.requires_grad());
  if (want(g, out)) {
    g.record({x}, out, [x, out, mask = std::move(mask)](AdjointStore& ctx) {
      auto go = ctx.of(out);
      auto& gx = ctx.accum(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }
  return out;
}

Tensor sum(Graph& g, const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total, x.requires_grad());
  if (want(g, out)) {
    g.record({x}, out, [x, out](AdjointStore& ctx) {
      const double go = ctx.of(out)[0];
      auto& gx = ctx.accum(x);
      for (double& v : gx) v += go;
    });
  }
  return out;
}

Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts) {
  if (parts.empty())
    throw ContractError("concat_cols: need at least one part");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  bool needs = false;
  for (const Tensor& p : parts) {
    if (p.rows() != n)
      throw ShapeError("concat_cols: row mismatch, " + parts[0].shape_str() +
                       " vs " + p.shape_str());
    total += p.cols();
    needs = needs || p.requires_grad();
  }
  Tensor out = Tensor::zeros({n, total}, needs);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t d = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out.values()[i * total + off + j] = p.values()[i * d + j];
    off += d;
  }
  if (want(g, out)) {
    g.record(parts, out, [parts, out, n, total](AdjointStore& ctx) {
      auto go = ctx.of(out);
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        const std::size_t d = p.cols();
        if (p.requires_grad()) {
          auto& gp = ctx.accum(p);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
              gp[i * d + j] += go[i * total + off + j];
        }
        off += d;
      }
    });
  }
  return out;
}

Tensor gather_rows(Graph& g, const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2)
    throw ShapeError("gather_rows: expected rank-2 table, got " +
                     table.shape_str());
  if (ids.empty()) throw ContractError("gather_rows: ids must be non-empty");
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw VocabError("gather_rows: id " + std::to_string(id) +
                       " out of range for table with " + std::to_string(v) +
                       " rows");
  const std::size_t n = ids.size();
  Tensor out = Tensor::zeros({n, d}, table.requires_grad());
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = table.values().data() + ids[i] * d;
    double* dst = out.values().data() + i * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
  }
  if (want(g, out)) {
    std::vector<int> idv(ids.begin(), ids.end());
    g.record({table}, out,
             [table, out, idv = std::move(idv), d](AdjointStore& ctx) {
               auto go = ctx.of(out);
               auto& gt = ctx.accum(table);
               for (std::size_t i = 0; i < idv.size(); ++i) {
                 double* dst = gt.data() + idv[i] * d;
                 const double* src = go.data() + i * d;
                 for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
               }
             });
  }
  return out;
}

Tensor finite_diff_grad(const std::function<double(Tensor&)>& f, Tensor x,
                        double h) {
  if (!(h > 0.0))
    throw ContractError("finite_diff_grad: h must be positive");
  std::vector<double> est(x.numel());
  auto& v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = f(x);
    v[i] = orig - h;
    const double fm = f(x);
    v[i] = orig;
    est[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(est));
}

}  // namespace atnl
