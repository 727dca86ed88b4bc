#include "spacebyte/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "spacebyte/error.h"
#include "spacebyte/kernels.h"

namespace spacebyte {
namespace {

template <typename Real>
using NodeT = detail::Node<Real>;

template <typename Real>
std::size_t rows_of(const Tensor<Real>& t) {
  return t.numel() / t.dim(-1);
}

template <typename Real>
void require_rank_at_least(const Tensor<Real>& t, std::size_t r, const char* op) {
  if (!t.defined() || t.rank() < r) {
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(r) +
                         ", got " + (t.defined() ? shape_str(t.shape()) : "undefined"));
  }
}

template <typename Real>
void transpose_into(const Real* src, std::size_t rows, std::size_t cols, Real* dst) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j * rows + i] = src[i * cols + j];
    }
  }
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c,
             bool accumulate, std::vector<Real>& scratch) {
  scratch.resize(k * n);
  transpose_into(b, n, k, scratch.data());
  kernels::active<Real>().gemm(m, n, k, a, scratch.data(), c, accumulate);
}

// C[m x n] (+)= A[k x m]^T * B[k x n]
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c,
             bool accumulate, std::vector<Real>& scratch) {
  scratch.resize(m * k);
  transpose_into(a, k, m, scratch.data());
  kernels::active<Real>().gemm(m, n, k, scratch.data(), b, c, accumulate);
}


}  // namespace

// ----------------------------------------------------------------------------
// matmul

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank_at_least(a, 2, "matmul");
  require_rank_at_least(b, 2, "matmul");
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw DimensionError("matmul: inner extents differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }

  if (b.rank() == 2) {
    const std::size_t rows = rows_of(a);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<Real> out(rows * n);
    kernels::active<Real>().gemm(rows, n, k, a.data().data(), b.data().data(), out.data(), false);
    return Tensor<Real>::make_result(
        std::move(out_shape), std::move(out), {a, b},
        [rows, n, k](NodeT<Real>& self) {
          auto& pa = *self.parents[0];
          auto& pb = *self.parents[1];
          std::vector<Real> scratch;
          if (pa.requires_grad) {
            gemm_nt(rows, k, n, self.grad.data(), pb.data.data(), pa.grad.data(), true, scratch);
          }
          if (pb.requires_grad) {
            gemm_tn(k, n, rows, pa.data.data(), self.grad.data(), pb.grad.data(), true, scratch);
          }
        },
        "matmul");
  }

  // Batched with broadcasting over the leading extents.
  const std::size_t batch_rank = std::max(a.rank(), b.rank()) - 2;
  auto padded_batch = [batch_rank](const Shape& s) {
    Shape out(batch_rank, 1);
    const std::size_t own = s.size() - 2;
    std::copy(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(own),
              out.begin() + static_cast<std::ptrdiff_t>(batch_rank - own));
    return out;
  };
  const Shape ab = padded_batch(a.shape());
  const Shape bb = padded_batch(b.shape());
  Shape ob(batch_rank);
  for (std::size_t i = 0; i < batch_rank; ++i) {
    if (ab[i] != bb[i] && ab[i] != 1 && bb[i] != 1) {
      throw DimensionError("matmul: batch extents not broadcastable for " +
                           shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    ob[i] = std::max(ab[i], bb[i]);
  }
  const std::size_t nbatch = shape_numel(ob);
  // Offsets (in matrices) of each output batch entry into a and b.
  std::vector<std::size_t> a_off(nbatch);
  std::vector<std::size_t> b_off(nbatch);
  for (std::size_t idx = 0; idx < nbatch; ++idx) {
    std::size_t rem = idx;
    std::size_t ao = 0;
    std::size_t bo = 0;
    std::size_t astride = 1;
    std::size_t bstride = 1;
    for (std::size_t d = batch_rank; d-- > 0;) {
      const std::size_t coord = rem % ob[d];
      rem /= ob[d];
      ao += (ab[d] == 1 ? 0 : coord) * astride;
      bo += (bb[d] == 1 ? 0 : coord) * bstride;
      astride *= ab[d];
      bstride *= bb[d];
    }
    a_off[idx] = ao;
    b_off[idx] = bo;
  }
  Shape out_shape = ob;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<Real> out(nbatch * m * n);
  for (std::size_t idx = 0; idx < nbatch; ++idx) {
    kernels::active<Real>().gemm(m, n, k, a.data().data() + a_off[idx] * m * k,
                                 b.data().data() + b_off[idx] * k * n, out.data() + idx * m * n,
                                 false);
  }
  return Tensor<Real>::make_result(
      std::move(out_shape), std::move(out), {a, b},
      [m, n, k, nbatch, a_off, b_off](NodeT<Real>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        std::vector<Real> scratch;
        for (std::size_t idx = 0; idx < nbatch; ++idx) {
          const Real* g = self.grad.data() + idx * m * n;
          if (pa.requires_grad) {
            gemm_nt(m, k, n, g, pb.data.data() + b_off[idx] * k * n,
                    pa.grad.data() + a_off[idx] * m * k, true, scratch);
          }
          if (pb.requires_grad) {
            gemm_tn(k, n, m, pa.data.data() + a_off[idx] * m * k, g,
                    pb.grad.data() + b_off[idx] * k * n, true, scratch);
          }
        }
      },
      "matmul");
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  require_rank_at_least(a, 2, "transpose");
  const std::size_t r = a.dim(-2);
  const std::size_t c = a.dim(-1);
  const std::size_t nb = a.numel() / (r * c);
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<Real> out(a.numel());
  for (std::size_t b = 0; b < nb; ++b) {
    transpose_into(a.data().data() + b * r * c, r, c, out.data() + b * r * c);
  }
  return Tensor<Real>::make_result(
      std::move(out_shape), std::move(out), {a},
      [r, c, nb](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t b = 0; b < nb; ++b) {
          const Real* g = self.grad.data() + b * r * c;
          Real* dst = p.grad.data() + b * r * c;
          for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < r; ++j) {
              dst[j * c + i] += g[i * r + j];
            }
          }
        }
      },
      "transpose");
}

// ----------------------------------------------------------------------------
// elementwise and reshaping

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.data()[i] + b.data()[i];
  }
  return Tensor<Real>::make_result(
      a.shape(), std::move(out), {a, b},
      [](NodeT<Real>& self) {
        for (auto& p : self.parents) {
          if (p->requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
              p->grad[i] += self.grad[i];
            }
          }
        }
      },
      "add");
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.data()[i] * factor;
  }
  return Tensor<Real>::make_result(
      a.shape(), std::move(out), {a},
      [factor](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          p.grad[i] += self.grad[i] * factor;
        }
      },
      "scale");
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real s = 0;
  for (Real v : a.data()) {
    s += v;
  }
  return Tensor<Real>::make_result(
      {1}, {s}, {a},
      [](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (auto& g : p.grad) {
          g += self.grad[0];
        }
      },
      "sum");
}

template <typename Real>
Tensor<Real> add_tiled(const Tensor<Real>& x, const Tensor<Real>& table, std::size_t period) {
  require_rank_at_least(x, 2, "add_tiled");
  const std::size_t d = x.dim(-1);
  const std::size_t rows = rows_of(x);
  if (table.rank() != 2 || table.dim(-1) != d || table.dim(0) < period || period == 0 ||
      rows % period != 0) {
    throw DimensionError("add_tiled: cannot tile " + shape_str(table.shape()) + " with period " +
                         std::to_string(period) + " over " + shape_str(x.shape()));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* t = table.data().data() + (r % period) * d;
    Real* o = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] += t[j];
    }
  }
  return Tensor<Real>::make_result(
      x.shape(), std::move(out), {x, table},
      [rows, d, period](NodeT<Real>& self) {
        auto& px = *self.parents[0];
        auto& pt = *self.parents[1];
        if (px.requires_grad) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            px.grad[i] += self.grad[i];
          }
        }
        if (pt.requires_grad) {
          for (std::size_t r = 0; r < rows; ++r) {
            kernels::active<Real>().axpy(Real(1), self.grad.data() + r * d,
                                         pt.grad.data() + (r % period) * d, d);
          }
        }
      },
      "add_tiled");
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<Real> out(a.data().begin(), a.data().end());
  return Tensor<Real>::make_result(
      std::move(shape), std::move(out), {a},
      [](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          p.grad[i] += self.grad[i];
        }
      },
      "reshape");
}

template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) {
    throw DimensionError("embedding: table must be [V, d], got " + shape_str(table.shape()));
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  std::vector<Real> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= vocab) {
      throw InputError("token id " + std::to_string(idx[r]) + " at position " +
                       std::to_string(r) + " is outside the vocabulary of size " +
                       std::to_string(vocab));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(idx[r]) * d, d,
                out.data() + r * d);
  }
  const Shape out_shape{idx.size(), d};
  return Tensor<Real>::make_result(
      out_shape, std::move(out), {table},
      [idx = std::move(idx), d](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t r = 0; r < idx.size(); ++r) {
          kernels::active<Real>().axpy(Real(1), self.grad.data() + r * d,
                                       p.grad.data() + static_cast<std::size_t>(idx[r]) * d, d);
        }
      },
      "embedding");
}

// ----------------------------------------------------------------------------
// normalisation and activations

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  require_rank_at_least(x, 1, "softmax");
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.numel() / d;
  std::vector<Real> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = x.data().data() + r * d;
    Real* o = out.data() + r * d;
    const Real mx = *std::max_element(in, in + d);
    Real z = 0;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      o[j] /= z;
    }
  }
  return Tensor<Real>::make_result(
      x.shape(), out, {x},
      [probs = out, rows, d](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* y = probs.data() + r * d;
          const Real* g = self.grad.data() + r * d;
          Real dotv = 0;
          for (std::size_t j = 0; j < d; ++j) {
            dotv += y[j] * g[j];
          }
          Real* dx = p.grad.data() + r * d;
          for (std::size_t j = 0; j < d; ++j) {
            dx[j] += y[j] * (g[j] - dotv);
          }
        }
      },
      "softmax");
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, double eps) {
  require_rank_at_least(x, 1, "layer_norm");
  const std::size_t d = x.dim(-1);
  if (gain.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) +
                         " does not match last extent of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<Real> xhat(x.numel());
  std::vector<Real> rstd(rows);
  std::vector<Real> out(x.numel());
  const Real* g = gain.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = x.data().data() + r * d;
    Real mean = 0;
    for (std::size_t j = 0; j < d; ++j) {
      mean += in[j];
    }
    mean /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const Real c = in[j] - mean;
      var += c * c;
    }
    var /= static_cast<Real>(d);
    const Real rs = Real(1) / std::sqrt(var + static_cast<Real>(eps));
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = (in[j] - mean) * rs;
      xhat[r * d + j] = h;
      out[r * d + j] = h * g[j];
    }
  }
  return Tensor<Real>::make_result(
      x.shape(), std::move(out), {x, gain},
      [xhat = std::move(xhat), rstd = std::move(rstd), rows, d](NodeT<Real>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        const Real* g = pg.data.data();
        std::vector<Real> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* dy = self.grad.data() + r * d;
          const Real* h = xhat.data() + r * d;
          if (pg.requires_grad) {
            for (std::size_t j = 0; j < d; ++j) {
              pg.grad[j] += dy[j] * h[j];
            }
          }
          if (px.requires_grad) {
            Real mean_d = 0;
            Real mean_dh = 0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = dy[j] * g[j];
              mean_d += dxhat[j];
              mean_dh += dxhat[j] * h[j];
            }
            mean_d /= static_cast<Real>(d);
            mean_dh /= static_cast<Real>(d);
            Real* dx = px.grad.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) {
              dx[j] += rstd[r] * (dxhat[j] - mean_d - h[j] * mean_dh);
            }
          }
        }
      },
      "layer_norm");
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  const Real inv_sqrt2 = static_cast<Real>(1.0 / std::numbers::sqrt2);
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = x.data()[i];
    out[i] = Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2));
  }
  return Tensor<Real>::make_result(
      x.shape(), std::move(out), {x},
      [inv_sqrt2](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        const Real inv_sqrt_2pi = static_cast<Real>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const Real v = p.data[i];
          const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
          const Real pdf = inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
          p.grad[i] += self.grad[i] * (cdf + v * pdf);
        }
      },
      "gelu");
}

template <typename Real>
Tensor<Real> rope_apply(const Tensor<Real>& x, std::span<const std::int32_t> positions,
                        double base) {
  require_rank_at_least(x, 1, "rope_apply");
  const std::size_t hd = x.dim(-1);
  if (hd % 2 != 0) {
    throw ConfigError("rope_apply: head dimension must be even, got " + std::to_string(hd));
  }
  const std::size_t rows = x.numel() / hd;
  if (positions.size() != rows) {
    throw DimensionError("rope_apply: " + std::to_string(positions.size()) +
                         " positions for " + std::to_string(rows) + " rows of " +
                         shape_str(x.shape()));
  }
  const std::size_t half = hd / 2;
  std::vector<Real> cosv(rows * half);
  std::vector<Real> sinv(rows * half);
  std::vector<double> freq(half);
  for (std::size_t j = 0; j < half; ++j) {
    freq[j] = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(hd));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < half; ++j) {
      const double angle = static_cast<double>(positions[r]) * freq[j];
      cosv[r * half + j] = static_cast<Real>(std::cos(angle));
      sinv[r * half + j] = static_cast<Real>(std::sin(angle));
    }
  }
  std::vector<Real> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = x.data().data() + r * hd;
    Real* o = out.data() + r * hd;
    for (std::size_t j = 0; j < half; ++j) {
      const Real c = cosv[r * half + j];
      const Real s = sinv[r * half + j];
      o[2 * j] = in[2 * j] * c - in[2 * j + 1] * s;
      o[2 * j + 1] = in[2 * j] * s + in[2 * j + 1] * c;
    }
  }
  return Tensor<Real>::make_result(
      x.shape(), std::move(out), {x},
      [cosv = std::move(cosv), sinv = std::move(sinv), rows, hd, half](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* g = self.grad.data() + r * hd;
          Real* dx = p.grad.data() + r * hd;
          for (std::size_t j = 0; j < half; ++j) {
            const Real c = cosv[r * half + j];
            const Real s = sinv[r * half + j];
            dx[2 * j] += g[2 * j] * c + g[2 * j + 1] * s;
            dx[2 * j + 1] += -g[2 * j] * s + g[2 * j + 1] * c;
          }
        }
      },
      "rope");
}

template <typename Real>
Tensor<Real> cross_entropy_masked(const Tensor<Real>& logits,
                                  std::span<const std::int32_t> targets,
                                  std::vector<double>* per_row_nll) {
  require_rank_at_least(logits, 1, "cross_entropy_masked");
  const std::size_t vocab = logits.dim(-1);
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy_masked: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<Real> probs(logits.numel());
  std::size_t count = 0;
  double total = 0.0;
  if (per_row_nll) {
    per_row_nll->assign(rows, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int32_t t = tgt[r];
    if (t == kIgnoreTarget) {
      continue;
    }
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw InputError("target " + std::to_string(t) + " at row " + std::to_string(r) +
                       " is outside [0, " + std::to_string(vocab) + ")");
    }
    const Real* in = logits.data().data() + r * vocab;
    Real* pr = probs.data() + r * vocab;
    const Real mx = *std::max_element(in, in + vocab);
    Real z = 0;
    for (std::size_t j = 0; j < vocab; ++j) {
      pr[j] = std::exp(in[j] - mx);
      z += pr[j];
    }
    for (std::size_t j = 0; j < vocab; ++j) {
      pr[j] /= z;
    }
    const double nll =
        static_cast<double>(std::log(z)) + static_cast<double>(mx) - static_cast<double>(in[t]);
    if (per_row_nll) {
      (*per_row_nll)[r] = nll;
    }
    total += nll;
    ++count;
  }
  const Real loss = count ? static_cast<Real>(total / static_cast<double>(count)) : Real(0);
  return Tensor<Real>::make_result(
      {1}, {loss}, {logits},
      [probs = std::move(probs), tgt = std::move(tgt), rows, vocab, count](NodeT<Real>& self) {
        if (count == 0) {
          return;
        }
        auto& p = *self.parents[0];
        const Real g = self.grad[0] / static_cast<Real>(count);
        for (std::size_t r = 0; r < rows; ++r) {
          if (tgt[r] == kIgnoreTarget) {
            continue;
          }
          const Real* pr = probs.data() + r * vocab;
          Real* dx = p.grad.data() + r * vocab;
          for (std::size_t j = 0; j < vocab; ++j) {
            dx[j] += g * pr[j];
          }
          dx[tgt[r]] -= g;
        }
      },
      "cross_entropy");
}

// ----------------------------------------------------------------------------
// attention

template <typename Real>
Tensor<Real> banded_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                              const Tensor<Real>& v, std::size_t batch, std::size_t seq,
                              std::size_t heads, AttentionSpan span) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape() ||
      q.dim(0) != batch * seq || heads == 0 || q.dim(1) % heads != 0) {
    throw DimensionError("banded_attention: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()) + " for batch " +
                         std::to_string(batch) + " x seq " + std::to_string(seq) + " and " +
                         std::to_string(heads) + " heads");
  }
  if (span.window == 0) {
    throw ConfigError("banded_attention: window must be >= 1");
  }
  const std::size_t dm = q.dim(1);
  const std::size_t hd = dm / heads;
  const Real scl = Real(1) / std::sqrt(static_cast<Real>(hd));
  const auto& kern = kernels::active<Real>();

  // probs[((b * heads + h) * seq + t) * band + (s - first_key(t))]
  const std::size_t band = std::min(span.window, seq);
  std::vector<Real> probs(batch * heads * seq * band, Real(0));
  std::vector<Real> out(q.numel(), Real(0));
  const Real* qd = q.data().data();
  const Real* kd = k.data().data();
  const Real* vd = v.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < seq; ++t) {
        const std::size_t lo = span.first_key(t);
        const std::size_t n = t - lo + 1;
        Real* pr = probs.data() + ((b * heads + h) * seq + t) * band;
        const Real* qt = qd + (b * seq + t) * dm + h * hd;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
          pr[i] = scl * kern.dot(qt, kd + (b * seq + lo + i) * dm + h * hd, hd);
          mx = std::max(mx, pr[i]);
        }
        Real z = 0;
        for (std::size_t i = 0; i < n; ++i) {
          pr[i] = std::exp(pr[i] - mx);
          z += pr[i];
        }
        Real* ot = out.data() + (b * seq + t) * dm + h * hd;
        for (std::size_t i = 0; i < n; ++i) {
          pr[i] /= z;
          kern.axpy(pr[i], vd + (b * seq + lo + i) * dm + h * hd, ot, hd);
        }
      }
    }
  }
  return Tensor<Real>::make_result(
      q.shape(), std::move(out), {q, k, v},
      [probs = std::move(probs), batch, seq, heads, span, band, dm, hd, scl](NodeT<Real>& self) {
        auto& pq = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pv = *self.parents[2];
        const auto& kern = kernels::active<Real>();
        std::vector<Real> dscore(band);
        std::vector<Real> dq_scratch(hd);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t t = 0; t < seq; ++t) {
              const std::size_t lo = span.first_key(t);
              const std::size_t n = t - lo + 1;
              const Real* pr = probs.data() + ((b * heads + h) * seq + t) * band;
              const std::size_t qoff = (b * seq + t) * dm + h * hd;
              const Real* go = self.grad.data() + qoff;
              Real weighted = 0;
              for (std::size_t i = 0; i < n; ++i) {
                const std::size_t koff = (b * seq + lo + i) * dm + h * hd;
                const Real dp = kern.dot(go, pv.data.data() + koff, hd);
                if (pv.requires_grad) {
                  kern.axpy(pr[i], go, pv.grad.data() + koff, hd);
                }
                dscore[i] = dp;
                weighted += pr[i] * dp;
              }
              for (std::size_t i = 0; i < n; ++i) {
                dscore[i] = pr[i] * (dscore[i] - weighted) * scl;
              }
              if (pq.requires_grad) {
                Real* dq = pq.grad.data() + qoff;
                for (std::size_t i = 0; i < n; ++i) {
                  kern.axpy(dscore[i], pk.data.data() + (b * seq + lo + i) * dm + h * hd, dq, hd);
                }
              }
              if (pk.requires_grad) {
                const Real* qt = pq.data.data() + qoff;
                for (std::size_t i = 0; i < n; ++i) {
                  kern.axpy(dscore[i], qt, pk.grad.data() + (b * seq + lo + i) * dm + h * hd, hd);
                }
              }
            }
          }
        }
      },
      "attention");
}

// ----------------------------------------------------------------------------
// multiscale plumbing

template <typename Real>
Tensor<Real> gather_rows_padded(const Tensor<Real>& x, std::span<const std::size_t> rows,
                                std::size_t out_dim) {
  if (x.rank() != 2 || out_dim < x.dim(1)) {
    throw DimensionError("gather_rows_padded: cannot widen " + shape_str(x.shape()) + " to " +
                         std::to_string(out_dim));
  }
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  const std::size_t pad = out_dim - d;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<Real> out(idx.size() * out_dim, Real(0));
  for (std::size_t s = 0; s < idx.size(); ++s) {
    if (idx[s] >= n) {
      throw DimensionError("gather_rows_padded: row " + std::to_string(idx[s]) +
                           " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(x.data().data() + idx[s] * d, d, out.data() + s * out_dim + pad);
  }
  const Shape out_shape{idx.size(), out_dim};
  return Tensor<Real>::make_result(
      out_shape, std::move(out), {x},
      [idx = std::move(idx), d, pad, out_dim](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t s = 0; s < idx.size(); ++s) {
          const Real* g = self.grad.data() + s * out_dim + pad;
          Real* dx = p.grad.data() + idx[s] * d;
          for (std::size_t j = 0; j < d; ++j) {
            dx[j] += g[j];
          }
        }
      },
      "gather_rows_padded");
}

template <typename Real>
Tensor<Real> scatter_add_trailing(const Tensor<Real>& x, const Tensor<Real>& y,
                                  std::span<const std::size_t> rows,
                                  std::span<const std::uint8_t> valid) {
  if (x.rank() != 2 || y.rank() != 2 || y.dim(1) < x.dim(1) || y.dim(0) != rows.size() ||
      valid.size() != rows.size()) {
    throw DimensionError("scatter_add_trailing: x " + shape_str(x.shape()) + ", y " +
                         shape_str(y.shape()) + ", " + std::to_string(rows.size()) + " rows");
  }
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  const std::size_t wide = y.dim(1);
  const std::size_t off = wide - d;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<std::uint8_t> ok(valid.begin(), valid.end());
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (std::size_t s = 0; s < idx.size(); ++s) {
    if (!ok[s]) {
      continue;
    }
    if (idx[s] >= n) {
      throw DimensionError("scatter_add_trailing: row " + std::to_string(idx[s]) +
                           " out of range for " + shape_str(x.shape()));
    }
    const Real* src = y.data().data() + s * wide + off;
    Real* dst = out.data() + idx[s] * d;
    for (std::size_t j = 0; j < d; ++j) {
      dst[j] += src[j];
    }
  }
  return Tensor<Real>::make_result(
      x.shape(), std::move(out), {x, y},
      [idx = std::move(idx), ok = std::move(ok), d, wide, off](NodeT<Real>& self) {
        auto& px = *self.parents[0];
        auto& py = *self.parents[1];
        if (px.requires_grad) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            px.grad[i] += self.grad[i];
          }
        }
        if (py.requires_grad) {
          for (std::size_t s = 0; s < idx.size(); ++s) {
            if (!ok[s]) {
              continue;
            }
            const Real* g = self.grad.data() + idx[s] * d;
            Real* dy = py.grad.data() + s * wide + off;
            for (std::size_t j = 0; j < d; ++j) {
              dy[j] += g[j];
            }
          }
        }
      },
      "scatter_add_trailing");
}

template <typename Real>
Tensor<Real> shift_rows(const Tensor<Real>& x, std::size_t batch, std::size_t seq,
                        std::size_t shift) {
  if (x.rank() != 2 || x.dim(0) != batch * seq) {
    throw DimensionError("shift_rows: " + shape_str(x.shape()) + " is not [" +
                         std::to_string(batch) + " * " + std::to_string(seq) + ", d]");
  }
  const std::size_t d = x.dim(1);
  std::vector<Real> out(x.numel(), Real(0));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = shift; t < seq; ++t) {
      std::copy_n(x.data().data() + (b * seq + t - shift) * d, d,
                  out.data() + (b * seq + t) * d);
    }
  }
  return Tensor<Real>::make_result(
      x.shape(), std::move(out), {x},
      [batch, seq, shift, d](NodeT<Real>& self) {
        auto& p = *self.parents[0];
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = shift; t < seq; ++t) {
            const Real* g = self.grad.data() + (b * seq + t) * d;
            Real* dx = p.grad.data() + (b * seq + t - shift) * d;
            for (std::size_t j = 0; j < d; ++j) {
              dx[j] += g[j];
            }
          }
        }
      },
      "shift_rows");
}

#define SPACEBYTE_INSTANTIATE_OPS(Real)                                                       \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                     \
  template Tensor<Real> transpose(const Tensor<Real>&);                                       \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                        \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                     \
  template Tensor<Real> sum(const Tensor<Real>&);                                             \
  template Tensor<Real> add_tiled(const Tensor<Real>&, const Tensor<Real>&, std::size_t);     \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                                  \
  template Tensor<Real> embedding(const Tensor<Real>&, std::span<const std::int32_t>);        \
  template Tensor<Real> softmax(const Tensor<Real>&);                                         \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&, double);         \
  template Tensor<Real> gelu(const Tensor<Real>&);                                            \
  template Tensor<Real> rope_apply(const Tensor<Real>&, std::span<const std::int32_t>,        \
                                   double);                                                   \
  template Tensor<Real> cross_entropy_masked(const Tensor<Real>&,                             \
                                             std::span<const std::int32_t>,                   \
                                             std::vector<double>*);                           \
  template Tensor<Real> banded_attention(const Tensor<Real>&, const Tensor<Real>&,            \
                                         const Tensor<Real>&, std::size_t, std::size_t,       \
                                         std::size_t, AttentionSpan);                         \
  template Tensor<Real> gather_rows_padded(const Tensor<Real>&, std::span<const std::size_t>, \
                                           std::size_t);                                      \
  template Tensor<Real> scatter_add_trailing(const Tensor<Real>&, const Tensor<Real>&,        \
                                             std::span<const std::size_t>,                    \
                                             std::span<const std::uint8_t>);                  \
  template Tensor<Real> shift_rows(const Tensor<Real>&, std::size_t, std::size_t, std::size_t);

SPACEBYTE_INSTANTIATE_OPS(float)
SPACEBYTE_INSTANTIATE_OPS(double)

}  // namespace spacebyte
