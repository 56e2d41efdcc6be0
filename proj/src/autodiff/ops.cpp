#include "mdam/autodiff/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>

namespace mdam::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

ConstMatMap view(const detail::Node& n) { return ConstMatMap(n.value.data(), n.rows, n.cols); }
ConstMatMap view(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }
MatMap gview(detail::Node& n) { return MatMap(n.grad.data(), n.rows, n.cols); }
ConstMatMap gview_c(const detail::Node& n) { return ConstMatMap(n.grad.data(), n.rows, n.cols); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

template <typename F>
Tensor unary(const char* op, const Tensor& a, F&& f) {
  Tensor out = make_result(op, a.rows(), a.cols(), {a});
  auto in = a.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Tensor out = make_result("matmul", a.rows(), b.cols(), {a, b});
  MatMap(out.data(), out.rows(), out.cols()).noalias() = view(a) * view(b);
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& na = *self.inputs[0];
      auto& nb = *self.inputs[1];
      auto dc = gview_c(self);
      if (na.requires_grad) gview(na).noalias() += dc * view(nb).transpose();
      if (nb.requires_grad) gview(nb).noalias() += view(na).transpose() * dc;
    };
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.cols() != weight.rows()) {
    throw DimensionError("linear: input width " + std::to_string(x.cols()) +
                         " does not match weight rows " + std::to_string(weight.rows()));
  }
  if (bias.defined() && (bias.rows() != 1 || bias.cols() != weight.cols())) {
    throw DimensionError("linear: bias must be 1x" + std::to_string(weight.cols()));
  }
  Tensor out = bias.defined() ? make_result("linear", x.rows(), weight.cols(), {x, weight, bias})
                              : make_result("linear", x.rows(), weight.cols(), {x, weight});
  MatMap y(out.data(), out.rows(), out.cols());
  y.noalias() = view(x) * view(weight);
  if (bias.defined()) y.rowwise() += view(bias).row(0);
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& nx = *self.inputs[0];
      auto& nw = *self.inputs[1];
      auto dy = gview_c(self);
      if (nx.requires_grad) gview(nx).noalias() += dy * view(nw).transpose();
      if (nw.requires_grad) gview(nw).noalias() += view(nx).transpose() * dy;
      if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
        gview(*self.inputs[2]).row(0) += dy.colwise().sum();
      }
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make_result("add", a.rows(), a.cols(), {a, b});
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.values()[i] + b.values()[i];
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      for (auto& in : self.inputs) {
        if (!in->requires_grad) continue;
        for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make_result("sub", a.rows(), a.cols(), {a, b});
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.values()[i] - b.values()[i];
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& na = *self.inputs[0];
      auto& nb = *self.inputs[1];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (na.requires_grad) na.grad[i] += self.grad[i];
        if (nb.requires_grad) nb.grad[i] -= self.grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_result("mul", a.rows(), a.cols(), {a, b});
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.values()[i] * b.values()[i];
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& na = *self.inputs[0];
      auto& nb = *self.inputs[1];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (na.requires_grad) na.grad[i] += self.grad[i] * nb.value[i];
        if (nb.requires_grad) nb.grad[i] += self.grad[i] * na.value[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = unary("scale", a, [s](double x) { return s * x; });
  if (out.requires_grad()) {
    out.node()->backward = [s](detail::Node& self) {
      auto& na = *self.inputs[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += s * self.grad[i];
    };
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; });
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& na = *self.inputs[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (na.value[i] > 0.0) na.grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = unary("tanh", a, [](double x) { return std::tanh(x); });
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& na = *self.inputs[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        double y = self.value[i];
        na.grad[i] += self.grad[i] * (1.0 - y * y);
      }
    };
  }
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = unary("exp", a, [](double x) { return std::exp(x); });
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& na = *self.inputs[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (self.value[i] != 0.0) na.grad[i] += self.grad[i] * self.value[i];
      }
    };
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = make_result("sum", 1, 1, {a});
  double s = 0.0;
  for (double v : a.values()) s += v;
  out.values()[0] = s;
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& na = *self.inputs[0];
      for (double& g : na.grad) g += self.grad[0];
    };
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out = make_result("concat_cols", rows, cols, parts);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.data() + r * p.cols(), p.cols(), out.data() + r * cols + offset);
    }
    offset += p.cols();
  }
  if (out.requires_grad()) {
    out.node()->backward = [offsets](detail::Node& self) {
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        auto& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        for (std::size_t r = 0; r < in.rows; ++r) {
          for (std::size_t c = 0; c < in.cols; ++c) {
            in.grad[r * in.cols + c] += self.grad[r * self.cols + offsets[k] + c];
          }
        }
      }
    };
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor out = make_result("concat_rows", rows, cols, parts);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.data() + offset);
    offset += p.size();
  }
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      std::size_t offset = 0;
      for (auto& in : self.inputs) {
        if (in->requires_grad) {
          for (std::size_t i = 0; i < in->grad.size(); ++i) in->grad[i] += self.grad[offset + i];
        }
        offset += in->value.size();
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t cols = a.cols();
  for (std::size_t r : rows) {
    if (r >= a.rows()) throw DimensionError("gather_rows: row index out of range");
  }
  Tensor out = make_result("gather_rows", rows.size(), cols, {a});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(a.data() + rows[i] * cols, cols, out.data() + i * cols);
  }
  if (out.requires_grad()) {
    out.node()->backward = [idx = std::vector<std::size_t>(rows.begin(), rows.end())](
                               detail::Node& self) {
      auto& na = *self.inputs[0];
      const std::size_t cols = self.cols;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* dst = na.grad.data() + idx[i] * cols;
        const double* src = self.grad.data() + i * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
    };
  }
  return out;
}

Tensor block_mean(const Tensor& a, std::size_t block) {
  if (block == 0 || a.rows() % block != 0) {
    throw DimensionError("block_mean: rows not divisible by block size");
  }
  const std::size_t groups = a.rows() / block;
  const std::size_t cols = a.cols();
  Tensor out = make_result("block_mean", groups, cols, {a});
  const double inv = 1.0 / static_cast<double>(block);
  for (std::size_t g = 0; g < groups; ++g) {
    double* dst = out.data() + g * cols;
    for (std::size_t r = 0; r < block; ++r) {
      const double* src = a.data() + (g * block + r) * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
    for (std::size_t c = 0; c < cols; ++c) dst[c] *= inv;
  }
  if (out.requires_grad()) {
    out.node()->backward = [block, inv](detail::Node& self) {
      auto& na = *self.inputs[0];
      const std::size_t cols = self.cols;
      for (std::size_t g = 0; g < self.rows; ++g) {
        const double* src = self.grad.data() + g * cols;
        for (std::size_t r = 0; r < block; ++r) {
          double* dst = na.grad.data() + (g * block + r) * cols;
          for (std::size_t c = 0; c < cols; ++c) dst[c] += inv * src[c];
        }
      }
    };
  }
  return out;
}

Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t batch, std::size_t heads,
                        double scale_factor) {
  if (batch == 0 || heads == 0 || q.cols() != k.cols() || q.cols() % heads != 0 ||
      q.rows() % batch != 0 || k.rows() % batch != 0) {
    throw DimensionError("attention_scores: incompatible shapes");
  }
  const std::size_t d = q.cols();
  const std::size_t dk = d / heads;
  const std::size_t nq = q.rows() / batch;
  const std::size_t nk = k.rows() / batch;
  Tensor out = make_result("attention_scores", batch * heads * nq, nk, {q, k});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      ConstStrided qb(q.data() + b * nq * d + h * dk, nq, dk, Eigen::OuterStride<>(d));
      ConstStrided kb(k.data() + b * nk * d + h * dk, nk, dk, Eigen::OuterStride<>(d));
      MatMap s(out.data() + (b * heads + h) * nq * nk, nq, nk);
      s.noalias() = scale_factor * (qb * kb.transpose());
    }
  }
  if (out.requires_grad()) {
    out.node()->backward = [=](detail::Node& self) {
      auto& nq_node = *self.inputs[0];
      auto& nk_node = *self.inputs[1];
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          ConstMatMap ds(self.grad.data() + (b * heads + h) * nq * nk, nq, nk);
          if (nq_node.requires_grad) {
            Strided dq(nq_node.grad.data() + b * nq * d + h * dk, nq, dk, Eigen::OuterStride<>(d));
            ConstStrided kb(nk_node.value.data() + b * nk * d + h * dk, nk, dk,
                            Eigen::OuterStride<>(d));
            dq.noalias() += scale_factor * (ds * kb);
          }
          if (nk_node.requires_grad) {
            Strided dkm(nk_node.grad.data() + b * nk * d + h * dk, nk, dk, Eigen::OuterStride<>(d));
            ConstStrided qb(nq_node.value.data() + b * nq * d + h * dk, nq, dk,
                            Eigen::OuterStride<>(d));
            dkm.noalias() += scale_factor * (ds.transpose() * qb);
          }
        }
      }
    };
  }
  return out;
}

Tensor masked_attend(const Tensor& scores, const Tensor& v, Mask key_mask, std::size_t batch,
                     std::size_t heads) {
  if (batch == 0 || heads == 0 || scores.rows() % (batch * heads) != 0 ||
      v.rows() != batch * scores.cols() || v.cols() % heads != 0) {
    throw DimensionError("masked_attend: incompatible shapes");
  }
  const std::size_t nq = scores.rows() / (batch * heads);
  const std::size_t nk = scores.cols();
  const std::size_t d = v.cols();
  const std::size_t dk = d / heads;
  if (!key_mask.empty() && key_mask.size() != batch * nk) {
    throw DimensionError("masked_attend: mask must have batch*keys entries");
  }
  for (std::size_t b = 0; b < batch && !key_mask.empty(); ++b) {
    bool any = false;
    for (std::size_t j = 0; j < nk; ++j) any = any || key_mask[b * nk + j] == 0;
    if (!any) throw InfeasibleError("masked_attend: every key of an instance is masked");
  }

  Tensor out = make_result("masked_attend", batch * nq, d, {scores, v});
  auto probs = std::make_shared<std::vector<double>>(scores.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint8_t* m = key_mask.empty() ? nullptr : key_mask.data() + b * nk;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < nq; ++i) {
        const std::size_t row = ((b * heads + h) * nq + i) * nk;
        const double* s = scores.data() + row;
        double* p = probs->data() + row;
        double mx = kNegInf;
        for (std::size_t j = 0; j < nk; ++j) {
          if (!m || !m[j]) mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] = (!m || !m[j]) ? std::exp(s[j] - mx) : 0.0;
          z += p[j];
        }
        for (std::size_t j = 0; j < nk; ++j) p[j] /= z;
      }
      ConstMatMap pb(probs->data() + (b * heads + h) * nq * nk, nq, nk);
      ConstStrided vb(v.data() + b * nk * d + h * dk, nk, dk, Eigen::OuterStride<>(d));
      Strided ob(out.data() + b * nq * d + h * dk, nq, dk, Eigen::OuterStride<>(d));
      ob.noalias() = pb * vb;
    }
  }
  if (out.requires_grad()) {
    out.node()->backward = [=](detail::Node& self) {
      auto& ns = *self.inputs[0];
      auto& nv = *self.inputs[1];
      RowMat dp(nq, nk);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          ConstMatMap pb(probs->data() + (b * heads + h) * nq * nk, nq, nk);
          ConstStrided dout(self.grad.data() + b * nq * d + h * dk, nq, dk,
                            Eigen::OuterStride<>(d));
          ConstStrided vb(nv.value.data() + b * nk * d + h * dk, nk, dk, Eigen::OuterStride<>(d));
          if (nv.requires_grad) {
            Strided dv(nv.grad.data() + b * nk * d + h * dk, nk, dk, Eigen::OuterStride<>(d));
            dv.noalias() += pb.transpose() * dout;
          }
          if (ns.requires_grad) {
            dp.noalias() = dout * vb.transpose();
            MatMap ds(ns.grad.data() + (b * heads + h) * nq * nk, nq, nk);
            for (std::size_t i = 0; i < nq; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < nk; ++j) dot += pb(i, j) * dp(i, j);
              for (std::size_t j = 0; j < nk; ++j) ds(i, j) += pb(i, j) * (dp(i, j) - dot);
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor masked_log_softmax(const Tensor& logits, Mask mask) {
  const std::size_t rows = logits.rows();
  const std::size_t n = logits.cols();
  if (!mask.empty() && mask.size() != rows * n) {
    throw DimensionError("masked_log_softmax: mask size mismatch");
  }
  Tensor out = make_result("masked_log_softmax", rows, n, {logits});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data() + r * n;
    const std::uint8_t* m = mask.empty() ? nullptr : mask.data() + r * n;
    double* y = out.data() + r * n;
    double mx = kNegInf;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (m && m[j]) continue;
      any = true;
      mx = std::isnan(x[j]) || std::isnan(mx) ? std::numeric_limits<double>::quiet_NaN() : std::max(mx, x[j]);
    }
    if (!any) throw InfeasibleError("masked_log_softmax: every entry is masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!m || !m[j]) z += std::exp(x[j] - mx);
    }
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[j] = (!m || !m[j]) ? x[j] - lse : kNegInf;
  }
  if (out.requires_grad()) {
    out.node()->backward = [](detail::Node& self) {
      auto& nx = *self.inputs[0];
      const std::size_t n = self.cols;
      for (std::size_t r = 0; r < self.rows; ++r) {
        const double* y = self.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        double gs = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (y[j] != kNegInf) gs += g[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          if (y[j] != kNegInf) nx.grad[r * n + j] += g[j] - std::exp(y[j]) * gs;
        }
      }
    };
  }
  return out;
}

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  if (index.size() != a.rows()) throw DimensionError("pick: one index per row required");
  for (std::size_t i : index) {
    if (i >= a.cols()) throw DimensionError("pick: column index out of range");
  }
  Tensor out = make_result("pick", a.rows(), 1, {a});
  for (std::size_t r = 0; r < a.rows(); ++r) out.values()[r] = a(r, index[r]);
  if (out.requires_grad()) {
    out.node()->backward = [idx = std::vector<std::size_t>(index.begin(), index.end())](
                               detail::Node& self) {
      auto& na = *self.inputs[0];
      for (std::size_t r = 0; r < idx.size(); ++r) na.grad[r * na.cols + idx[r]] += self.grad[r];
    };
  }
  return out;
}

std::vector<double> masked_softmax(std::span<const double> logits, Mask mask) {
  if (!mask.empty() && mask.size() != logits.size()) {
    throw DimensionError("masked_softmax: mask size mismatch");
  }
  double mx = kNegInf;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask.empty() || !mask[j]) mx = std::max(mx, logits[j]);
  }
  if (mx == kNegInf) throw InfeasibleError("masked_softmax: every entry is masked");
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask.empty() || !mask[j]) {
      p[j] = std::exp(logits[j] - mx);
      z += p[j];
    }
  }
  for (double& x : p) x /= z;
  return p;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  BatchNormMode mode) {
  const std::size_t rows = x.rows();
  const std::size_t d = x.cols();
  if (gamma.size() != d || beta.size() != d || stats.running_mean.size() != d) {
    throw DimensionError("batch_norm: feature count mismatch");
  }
  if (mode == BatchNormMode::Train && rows < 2) {
    throw ConfigError("batch_norm: training mode needs a batch of at least 2 rows");
  }
  Tensor out = make_result("batch_norm", rows, d, {x, gamma, beta});
  auto xhat = std::make_shared<std::vector<double>>(rows * d);
  auto inv_std = std::make_shared<std::vector<double>>(d);

  std::vector<double> mu(d, 0.0), var(d, 0.0);
  if (mode == BatchNormMode::Train) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) mu[c] += x(r, c);
    }
    for (double& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        double dx = x(r, c) - mu[c];
        var[c] += dx * dx;
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      double biased = var[c] / static_cast<double>(rows);
      double unbiased = var[c] / static_cast<double>(rows - 1);
      var[c] = biased;
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu[c];
      stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    mu = stats.running_mean;
    var = stats.running_var;
  }
  for (std::size_t c = 0; c < d; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + stats.eps);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double h = (x(r, c) - mu[c]) * (*inv_std)[c];
      (*xhat)[r * d + c] = h;
      out.at(r, c) = gamma.values()[c] * h + beta.values()[c];
    }
  }
  if (out.requires_grad()) {
    const bool train = mode == BatchNormMode::Train;
    out.node()->backward = [xhat, inv_std, train](detail::Node& self) {
      auto& nx = *self.inputs[0];
      auto& ng = *self.inputs[1];
      auto& nb = *self.inputs[2];
      const std::size_t rows = self.rows;
      const std::size_t d = self.cols;
      std::vector<double> sum_dy(d, 0.0), sum_dy_xhat(d, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          double g = self.grad[r * d + c];
          sum_dy[c] += g;
          sum_dy_xhat[c] += g * (*xhat)[r * d + c];
        }
      }
      if (ng.requires_grad) {
        for (std::size_t c = 0; c < d; ++c) ng.grad[c] += sum_dy_xhat[c];
      }
      if (nb.requires_grad) {
        for (std::size_t c = 0; c < d; ++c) nb.grad[c] += sum_dy[c];
      }
      if (!nx.requires_grad) return;
      const double inv_n = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          double g = self.grad[r * d + c];
          double k = ng.value[c] * (*inv_std)[c];
          if (train) {
            nx.grad[r * d + c] +=
                k * (g - inv_n * sum_dy[c] - (*xhat)[r * d + c] * inv_n * sum_dy_xhat[c]);
          } else {
            nx.grad[r * d + c] += k * g;
          }
        }
      }
    };
  }
  return out;
}

}  // namespace mdam::ad
