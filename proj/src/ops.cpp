#include "longattn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "longattn/kernels.hpp"

namespace longattn {
namespace {

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

bool is_suffix(const Shape& whole, const Shape& part) {
  if (part.size() > whole.size()) return false;
  return std::equal(part.rbegin(), part.rend(), whole.rbegin());
}

void require_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(b.shape()) + " onto " +
                         to_string(a.shape()));
  }
}

void require_rows(const Tensor& x, const char* op) {
  if (x.rank() < 2) throw DimensionError(std::string(op) + " needs rank >= 2, got " + to_string(x.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw DimensionError("matmul inner extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  if (batch_a.empty()) batch = batch_b;
  else if (batch_b.empty()) batch = batch_a;
  else {
    if (batch_a.size() != batch_b.size()) {
      throw DimensionError("matmul batch ranks differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    for (std::size_t i = 0; i < batch_a.size(); ++i) {
      if (batch_a[i] != batch_b[i] && batch_a[i] != 1 && batch_b[i] != 1) {
        throw DimensionError("matmul batch extents incompatible: " + to_string(a.shape()) + " x " + to_string(b.shape()));
      }
      batch.push_back(std::max(batch_a[i], batch_b[i]));
    }
  }
  const std::size_t nbatch = numel(batch);
  // flat batch offsets for each operand, honoring size-1 broadcast
  auto offsets = [&](const Shape& own) {
    std::vector<std::size_t> off(nbatch, 0);
    if (own.empty()) return off;
    for (std::size_t flat = 0; flat < nbatch; ++flat) {
      std::size_t rem = flat, idx = 0, stride = 1;
      for (std::size_t d = batch.size(); d-- > 0;) {
        const std::size_t coord = rem % batch[d];
        rem /= batch[d];
        idx += (own[d] == 1 ? 0 : coord) * stride;
        stride *= own[d];
      }
      off[flat] = idx;
    }
    return off;
  };
  const auto off_a = offsets(batch_a);
  const auto off_b = offsets(batch_b);

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(nbatch * m * n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t t = 0; t < nbatch; ++t) {
    kernels::gemm_nn(pa + off_a[t] * m * k, pb + off_b[t] * k * n, out.data() + t * m * n, m, k, n, false);
  }
  return record(std::move(out_shape), std::move(out), {a, b},
                [a, b, m, k, n, nbatch, off_a, off_b](std::span<const double> g, BackwardContext& ctx) {
                  auto ga = ctx.grad(0);
                  auto gb = ctx.grad(1);
                  for (std::size_t t = 0; t < nbatch; ++t) {
                    const double* gt = g.data() + t * m * n;
                    if (!ga.empty()) {
                      kernels::gemm_nt(gt, b.data().data() + off_b[t] * k * n, ga.data() + off_a[t] * m * k, m, n, k, true);
                    }
                    if (!gb.empty()) {
                      kernels::gemm_tn(a.data().data() + off_a[t] * m * k, gt, gb.data() + off_b[t] * k * n, k, m, n, true);
                    }
                  }
                });
}

Tensor transpose(const Tensor& x) {
  require_rows(x, "transpose");
  const std::size_t rows = x.dim(-2), cols = x.dim(-1);
  const std::size_t batch = x.size() / (rows * cols);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<double> out(x.size());
  auto src = x.data();
  for (std::size_t t = 0; t < batch; ++t)
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[t * rows * cols + j * rows + i] = src[t * rows * cols + i * cols + j];
  return record(std::move(shape), std::move(out), {x}, [rows, cols, batch](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t t = 0; t < batch; ++t)
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gx[t * rows * cols + i * cols + j] += g[t * rows * cols + j * rows + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_broadcast(a, b, "add");
  const std::size_t nb = b.size();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i % nb];
  return record(a.shape(), std::move(out), {a, b}, [nb](std::span<const double> g, BackwardContext& ctx) {
    auto ga = ctx.grad(0);
    auto gb = ctx.grad(1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!ga.empty()) ga[i] += g[i];
      if (!gb.empty()) gb[i % nb] += g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_broadcast(a, b, "mul");
  const std::size_t nb = b.size();
  std::vector<double> out(a.size());
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i % nb];
  return record(a.shape(), std::move(out), {a, b}, [a, b, nb](std::span<const double> g, BackwardContext& ctx) {
    auto ga = ctx.grad(0);
    auto gb = ctx.grad(1);
    auto pa = a.data();
    auto pb = b.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!ga.empty()) ga[i] += g[i] * pb[i % nb];
      if (!gb.empty()) gb[i % nb] += g[i] * pa[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return record(x.shape(), std::move(out), {x}, [factor](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double a3 = 0.044715;
  std::vector<double> out(x.size());
  auto px = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = px[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + a3 * v * v * v)));
  }
  return record(x.shape(), std::move(out), {x}, [x](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    auto px = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px[i];
      const double t = std::tanh(c * (v + a3 * v * v * v));
      const double dt = (1.0 - t * t) * c * (1.0 + 3.0 * a3 * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto px = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] > 0.0 ? px[i] : 0.0;
  return record(x.shape(), std::move(out), {x}, [x](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    auto px = x.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (px[i] > 0.0) gx[i] += g[i];
  });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  auto px = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * mask[i];
  return record(x.shape(), std::move(out), {x}, [mask = std::move(mask)](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const std::size_t extent = x.shape()[ax];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  const std::size_t outer = x.size() / (extent * inner);
  std::vector<double> out(x.size());
  auto px = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      double mx = px[base];
      for (std::size_t e = 1; e < extent; ++e) mx = std::max(mx, px[base + e * inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        const double v = std::exp(px[base + e * inner] - mx);
        out[base + e * inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= total;
    }
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return record(x.shape(), std::move(out), {x}, [y, extent, inner, outer](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    const auto& py = *y;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * extent * inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < extent; ++e) dot += g[base + e * inner] * py[base + e * inner];
        for (std::size_t e = 0; e < extent; ++e) {
          const std::size_t i = base + e * inner;
          gx[i] += py[i] * (g[i] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.dim(-1);
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm gain/bias " + to_string(gain.shape()) + "/" + to_string(bias.shape()) +
                         " do not match last extent of " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  std::vector<double> xhat(x.size()), rstd(rows), out(x.size());
  auto px = x.data();
  auto pg = gain.data();
  auto pb = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = px.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mean) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * pg[j] + pb[j];
    }
  }
  return record(x.shape(), std::move(out), {x, gain, bias},
                [gain, xhat = std::move(xhat), rstd = std::move(rstd), d, rows](std::span<const double> g, BackwardContext& ctx) {
                  auto gx = ctx.grad(0);
                  auto gg = ctx.grad(1);
                  auto gb = ctx.grad(2);
                  auto pg = gain.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * d;
                    const double* xr = xhat.data() + r * d;
                    if (!gg.empty())
                      for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xr[j];
                    if (!gb.empty())
                      for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
                    if (gx.empty()) continue;
                    double mean_dx = 0.0, mean_dx_x = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dxh = gr[j] * pg[j];
                      mean_dx += dxh;
                      mean_dx_x += dxh * xr[j];
                    }
                    mean_dx /= static_cast<double>(d);
                    mean_dx_x /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                      gx[r * d + j] += rstd[r] * (gr[j] * pg[j] - mean_dx - xr[j] * mean_dx_x);
                    }
                  }
                });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids) {
  if (table.rank() != 2) throw DimensionError("embedding table must be rank 2, got " + to_string(table.shape()));
  if (ids.empty()) throw DimensionError("embedding_lookup with no ids");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<std::int64_t> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * d);
  auto pt = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw std::out_of_range("embedding id " + std::to_string(rows[i]) + " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(pt.data() + static_cast<std::size_t>(rows[i]) * d, d, out.data() + i * d);
  }
  Shape shape{rows.size(), d};
  return record(std::move(shape), std::move(out), {table}, [rows = std::move(rows), d](std::span<const double> g, BackwardContext& ctx) {
    auto gt = ctx.grad(0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double* dst = gt.data() + static_cast<std::size_t>(rows[i]) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, std::int64_t ignore_id) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("cross_entropy expects logits [T, V] with T targets; got " + to_string(logits.shape()) +
                         " and " + std::to_string(targets.size()) + " targets");
  }
  const std::size_t steps = logits.dim(0), vocab = logits.dim(1);
  auto pl = logits.data();
  std::vector<double> probs(logits.size(), 0.0);
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (tgt[t] == ignore_id) continue;
    if (tgt[t] < 0 || static_cast<std::size_t>(tgt[t]) >= vocab) {
      throw std::out_of_range("target id " + std::to_string(tgt[t]) + " outside [0, " + std::to_string(vocab) + ")");
    }
    const double* row = pl.data() + t * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(row[v] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[tgt[t]];
    for (std::size_t v = 0; v < vocab; ++v) probs[t * vocab + v] = std::exp(row[v] - lse);
    ++counted;
  }
  const double inv = counted ? 1.0 / static_cast<double>(counted) : 0.0;
  return record({1}, {total * inv}, {logits},
                [probs = std::move(probs), tgt = std::move(tgt), ignore_id, vocab, inv](std::span<const double> g, BackwardContext& ctx) {
                  auto gl = ctx.grad(0);
                  if (inv == 0.0) return;
                  for (std::size_t t = 0; t < tgt.size(); ++t) {
                    if (tgt[t] == ignore_id) continue;
                    for (std::size_t v = 0; v < vocab; ++v) gl[t * vocab + v] += g[0] * inv * probs[t * vocab + v];
                    gl[t * vocab + static_cast<std::size_t>(tgt[t])] -= g[0] * inv;
                  }
                });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return record({1}, {total}, {x}, [](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (double& v : gx) v += g[0];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return record(std::move(shape), std::move(out), {x}, [](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 2 || heads == 0 || x.dim(1) % heads != 0) {
    throw DimensionError("split_heads: " + to_string(x.shape()) + " not divisible into " + std::to_string(heads) + " heads");
  }
  const std::size_t len = x.dim(0), width = x.dim(1), hd = width / heads;
  std::vector<double> out(x.size());
  auto px = x.data();
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < len; ++i)
      std::copy_n(px.data() + i * width + h * hd, hd, out.data() + (h * len + i) * hd);
  return record({heads, len, hd}, std::move(out), {x}, [heads, len, width, hd](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < hd; ++j) gx[i * width + h * hd + j] += g[(h * len + i) * hd + j];
  });
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("merge_heads expects [h, L, d], got " + to_string(x.shape()));
  const std::size_t heads = x.dim(0), len = x.dim(1), hd = x.dim(2), width = heads * hd;
  std::vector<double> out(x.size());
  auto px = x.data();
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < len; ++i)
      std::copy_n(px.data() + (h * len + i) * hd, hd, out.data() + i * width + h * hd);
  return record({len, width}, std::move(out), {x}, [heads, len, width, hd](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < hd; ++j) gx[(h * len + i) * hd + j] += g[i * width + h * hd + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rows(x, "slice_rows");
  const std::size_t rows = x.dim(-2), cols = x.dim(-1);
  if (begin >= end || end > rows) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " + to_string(x.shape()));
  }
  const std::size_t batch = x.size() / (rows * cols), keep = end - begin;
  Shape shape = x.shape();
  shape[shape.size() - 2] = keep;
  std::vector<double> out(batch * keep * cols);
  auto px = x.data();
  for (std::size_t t = 0; t < batch; ++t)
    std::copy_n(px.data() + (t * rows + begin) * cols, keep * cols, out.data() + t * keep * cols);
  return record(std::move(shape), std::move(out), {x}, [rows, cols, batch, keep, begin](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t t = 0; t < batch; ++t)
      for (std::size_t i = 0; i < keep * cols; ++i) gx[(t * rows + begin) * cols + i] += g[t * keep * cols + i];
  });
}

Tensor pad_rows(const Tensor& x, std::size_t before, std::size_t after) {
  require_rows(x, "pad_rows");
  if (before == 0 && after == 0) return x;
  const std::size_t rows = x.dim(-2), cols = x.dim(-1);
  const std::size_t batch = x.size() / (rows * cols), total = rows + before + after;
  Shape shape = x.shape();
  shape[shape.size() - 2] = total;
  std::vector<double> out(batch * total * cols, 0.0);
  auto px = x.data();
  for (std::size_t t = 0; t < batch; ++t)
    std::copy_n(px.data() + t * rows * cols, rows * cols, out.data() + (t * total + before) * cols);
  return record(std::move(shape), std::move(out), {x}, [rows, cols, batch, total, before](std::span<const double> g, BackwardContext& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t t = 0; t < batch; ++t)
      for (std::size_t i = 0; i < rows * cols; ++i) gx[t * rows * cols + i] += g[(t * total + before) * cols + i];
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rows(a, "concat_rows");
  require_rows(b, "concat_rows");
  Shape lead_a(a.shape().begin(), a.shape().end() - 2), lead_b(b.shape().begin(), b.shape().end() - 2);
  if (lead_a != lead_b || a.dim(-1) != b.dim(-1)) {
    throw DimensionError("concat_rows shapes incompatible: " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t ra = a.dim(-2), rb = b.dim(-2), cols = a.dim(-1), total = ra + rb;
  const std::size_t batch = numel(lead_a);
  Shape shape = a.shape();
  shape[shape.size() - 2] = total;
  std::vector<double> out(batch * total * cols);
  for (std::size_t t = 0; t < batch; ++t) {
    std::copy_n(a.data().data() + t * ra * cols, ra * cols, out.data() + t * total * cols);
    std::copy_n(b.data().data() + t * rb * cols, rb * cols, out.data() + (t * total + ra) * cols);
  }
  return record(std::move(shape), std::move(out), {a, b}, [ra, rb, cols, total, batch](std::span<const double> g, BackwardContext& ctx) {
    auto ga = ctx.grad(0);
    auto gb = ctx.grad(1);
    for (std::size_t t = 0; t < batch; ++t) {
      if (!ga.empty())
        for (std::size_t i = 0; i < ra * cols; ++i) ga[t * ra * cols + i] += g[t * total * cols + i];
      if (!gb.empty())
        for (std::size_t i = 0; i < rb * cols; ++i) gb[t * rb * cols + i] += g[(t * total + ra) * cols + i];
    }
  });
}

Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  NoGradScope no_grad;
  std::vector<double> grad(x.size());
  std::vector<double> probe(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig - h;
    const double down = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(grad));
}

}  // namespace longattn
