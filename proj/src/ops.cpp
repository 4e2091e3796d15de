#include "wean/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wean {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

using Backward = std::function<void(detail::Node&)>;

Tensor make_result(Shape shape, std::vector<double> values, const char* op, std::initializer_list<Tensor> inputs,
                   Backward backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  bool needs_grad = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient span of an input, or empty when it does not take gradients.
std::span<double> input_grad(detail::Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  if (!in.requires_grad) return {};
  return in.ensure_grad();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

ConstMap as_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Splits a tensor into (rows, last-axis length) for row-wise ops.
std::pair<std::size_t, std::size_t> rows_and_width(const Tensor& x, const char* op) {
  if (x.rank() == 0 || x.rank() > 2) {
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_string(x.shape()));
  }
  const std::size_t width = x.shape().back();
  if (width == 0) throw DimensionError(std::string(op) + ": empty axis in shape " + shape_string(x.shape()));
  return {x.size() / width, width};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  as_matrix(std::span<double>(out), m, n).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node& self) {
    auto g = as_matrix(std::span<const double>(self.grad), m, n);
    const auto& av = self.inputs[0]->values;
    const auto& bv = self.inputs[1]->values;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      as_matrix(ga, m, k).noalias() += g * as_matrix(bv, k, n).transpose();
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      as_matrix(gb, k, n).noalias() += as_matrix(av, m, k).transpose() * g;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n);
  as_matrix(std::span<double>(out), m, n).noalias() =
      as_matrix(a.values(), m, k) * as_matrix(b.values(), n, k).transpose();
  return make_result({m, n}, std::move(out), "matmul_nt", {a, b}, [m, k, n](detail::Node& self) {
    auto g = as_matrix(std::span<const double>(self.grad), m, n);
    const auto& av = self.inputs[0]->values;
    const auto& bv = self.inputs[1]->values;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      as_matrix(ga, m, k).noalias() += g * as_matrix(bv, n, k);
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      as_matrix(gb, n, k).noalias() += g.transpose() * as_matrix(av, m, k);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](detail::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto g = input_grad(self, k); !g.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.values()[c];
  }
  return make_result(x.shape(), std::move(out), "add_bias", {x, bias}, [rows, cols](detail::Node& self) {
    if (auto gx = input_grad(self, 0); !gx.empty()) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += self.grad[r * cols + c];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node& self) {
    const auto& av = self.inputs[0]->values;
    const auto& bv = self.inputs[1]->values;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bv[i];
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), "scale", {x}, [factor](detail::Node& self) {
    if (auto g = input_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total}, "sum", {x}, [](detail::Node& self) {
    if (auto g = input_grad(self, 0); !g.empty()) {
      for (double& v : g) v += self.grad[0];
    }
  });
}

Tensor activation(const Tensor& x, Activation kind) {
  std::vector<double> out(x.size());
  if (kind == Activation::kTanh) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.values()[i]);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
  }
  const char* name = kind == Activation::kTanh ? "tanh" : "sigmoid";
  return make_result(x.shape(), std::move(out), name, {x}, [kind](detail::Node& self) {
    auto g = input_grad(self, 0);
    if (g.empty()) return;
    const auto& y = self.values;
    if (kind == Activation::kTanh) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - y[i] * y[i]);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Tensor softmax(const Tensor& x) {
  const auto [rows, width] = rows_and_width(x, "softmax");
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * width;
    double* o = out.data() + r * width;
    const double top = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) z += (o[c] = std::exp(in[c] - top));
    for (std::size_t c = 0; c < width; ++c) o[c] /= z;
  }
  return make_result(x.shape(), std::move(out), "softmax", {x}, [rows, width](detail::Node& self) {
    auto g = input_grad(self, 0);
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * width;
      const double* dy = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < width; ++c) g[r * width + c] += y[c] * (dy[c] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const auto [rows, width] = rows_and_width(x, "log_softmax");
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * width;
    double* o = out.data() + r * width;
    const double top = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) z += std::exp(in[c] - top);
    const double log_z = top + std::log(z);
    for (std::size_t c = 0; c < width; ++c) o[c] = in[c] - log_z;
  }
  return make_result(x.shape(), std::move(out), "log_softmax", {x}, [rows, width](detail::Node& self) {
    auto g = input_grad(self, 0);
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * width;
      const double* dy = self.grad.data() + r * width;
      double total = 0.0;
      for (std::size_t c = 0; c < width; ++c) total += dy[c];
      for (std::size_t c = 0; c < width; ++c) g[r * width + c] += dy[c] - std::exp(y[c]) * total;
    }
  });
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() == 1 && a.size() == 0) return b;
  if (b.rank() == 1 && b.size() == 0) return a;
  if (a.rank() != b.rank() || a.rank() == 0 || a.rank() > 2 || axis >= a.rank()) {
    throw DimensionError("concat: cannot join " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " along axis " + std::to_string(axis));
  }
  if (a.rank() == 1 || axis == 0) {
    if (a.rank() == 2 && a.dim(1) != b.dim(1)) {
      throw DimensionError("concat: column counts differ in " + shape_string(a.shape()) + " and " +
                           shape_string(b.shape()));
    }
    std::vector<double> out(a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    Shape shape = a.shape();
    shape[0] += b.dim(0);
    const std::size_t split = a.size();
    return make_result(std::move(shape), std::move(out), "concat", {a, b}, [split](detail::Node& self) {
      if (auto ga = input_grad(self, 0); !ga.empty()) {
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
      }
      if (auto gb = input_grad(self, 1); !gb.empty()) {
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[split + i];
      }
    });
  }
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat: row counts differ in " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1), width = ca + cb;
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * ca, ca, out.data() + r * width);
    std::copy_n(b.values().data() + r * cb, cb, out.data() + r * width + ca);
  }
  return make_result({rows, width}, std::move(out), "concat", {a, b}, [rows, ca, cb, width](detail::Node& self) {
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += self.grad[r * width + c];
      }
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += self.grad[r * width + ca + c];
      }
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_string(x.shape()));
  }
  const std::size_t width = end - begin;
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.values().data() + r * cols + begin, width, out.data() + r * width);
  }
  return make_result({rows, width}, std::move(out), "slice_cols", {x}, [rows, cols, begin, width](detail::Node& self) {
    auto g = input_grad(self, 0);
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) g[r * cols + begin + c] += self.grad[r * width + c];
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  std::vector<double> out(ids.size() * width);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " out of range for table of " +
                       std::to_string(vocab) + " rows");
    }
    std::copy_n(table.values().data() + ids[i] * width, width, out.data() + i * width);
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return make_result({ids.size(), width}, std::move(out), "gather_rows", {table},
                     [rows = std::move(rows), width](detail::Node& self) {
                       auto g = input_grad(self, 0);
                       if (g.empty()) return;
                       for (std::size_t i = 0; i < rows.size(); ++i) {
                         double* dst = g.data() + rows[i] * width;
                         const double* src = self.grad.data() + i * width;
                         for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
                       }
                     });
}

Tensor select_rows(std::span<const unsigned char> take_a, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "select_rows");
  require_rank(a, 2, "select_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (take_a.size() != rows) {
    throw DimensionError("select_rows: " + std::to_string(take_a.size()) + " flags for " + std::to_string(rows) +
                         " rows");
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& src = take_a[r] ? a : b;
    std::copy_n(src.values().data() + r * cols, cols, out.data() + r * cols);
  }
  std::vector<unsigned char> flags(take_a.begin(), take_a.end());
  return make_result(a.shape(), std::move(out), "select_rows", {a, b},
                     [flags = std::move(flags), cols](detail::Node& self) {
                       for (std::size_t k = 0; k < 2; ++k) {
                         auto g = input_grad(self, k);
                         if (g.empty()) continue;
                         for (std::size_t r = 0; r < flags.size(); ++r) {
                           if ((flags[r] != 0) != (k == 0)) continue;
                           for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c];
                         }
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x}, [](detail::Node& self) {
    if (auto g = input_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor stack_steps(std::span<const Tensor> steps) {
  if (steps.empty()) throw DimensionError("stack_steps: no steps");
  const Shape& first = steps.front().shape();
  if (first.size() != 2) throw DimensionError("stack_steps: expected [B x k] steps, got " + shape_string(first));
  for (const auto& s : steps) require_same_shape(steps.front(), s, "stack_steps");
  const std::size_t batch = first[0], width = first[1], count = steps.size();
  std::vector<double> out(batch * count * width);
  for (std::size_t t = 0; t < count; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(steps[t].values().data() + b * width, width, out.data() + (b * count + t) * width);
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = {batch, count, width};
  node->values = std::move(out);
  node->op = "stack_steps";
  bool needs_grad = false;
  if (GradMode::enabled()) {
    for (const auto& s : steps) needs_grad = needs_grad || s.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto& s : steps) node->inputs.push_back(s.node());
    node->backward = [batch, count, width](detail::Node& self) {
      for (std::size_t t = 0; t < count; ++t) {
        auto g = input_grad(self, t);
        if (g.empty()) continue;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* src = self.grad.data() + (b * count + t) * width;
          for (std::size_t c = 0; c < width; ++c) g[b * width + c] += src[c];
        }
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor batch_matvec(const Tensor& keys, const Tensor& query) {
  require_rank(keys, 3, "batch_matvec");
  require_rank(query, 2, "batch_matvec");
  const std::size_t batch = keys.dim(0), count = keys.dim(1), width = keys.dim(2);
  if (query.dim(0) != batch || query.dim(1) != width) {
    throw DimensionError("batch_matvec: keys " + shape_string(keys.shape()) + " vs query " +
                         shape_string(query.shape()));
  }
  std::vector<double> out(batch * count);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* q = query.values().data() + b * width;
    for (std::size_t i = 0; i < count; ++i) {
      const double* k = keys.values().data() + (b * count + i) * width;
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += k[c] * q[c];
      out[b * count + i] = dot;
    }
  }
  return make_result({batch, count}, std::move(out), "batch_matvec", {keys, query},
                     [batch, count, width](detail::Node& self) {
                       const auto& kv = self.inputs[0]->values;
                       const auto& qv = self.inputs[1]->values;
                       auto gk = input_grad(self, 0);
                       auto gq = input_grad(self, 1);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t i = 0; i < count; ++i) {
                           const double g = self.grad[b * count + i];
                           const std::size_t base = (b * count + i) * width;
                           if (!gk.empty()) {
                             for (std::size_t c = 0; c < width; ++c) gk[base + c] += g * qv[b * width + c];
                           }
                           if (!gq.empty()) {
                             for (std::size_t c = 0; c < width; ++c) gq[b * width + c] += g * kv[base + c];
                           }
                         }
                       }
                     });
}

Tensor batch_vecmat(const Tensor& weights, const Tensor& rows) {
  require_rank(weights, 2, "batch_vecmat");
  require_rank(rows, 3, "batch_vecmat");
  const std::size_t batch = rows.dim(0), count = rows.dim(1), width = rows.dim(2);
  if (weights.dim(0) != batch || weights.dim(1) != count) {
    throw DimensionError("batch_vecmat: weights " + shape_string(weights.shape()) + " vs rows " +
                         shape_string(rows.shape()));
  }
  std::vector<double> out(batch * width, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < count; ++i) {
      const double w = weights.values()[b * count + i];
      const double* r = rows.values().data() + (b * count + i) * width;
      for (std::size_t c = 0; c < width; ++c) out[b * width + c] += w * r[c];
    }
  }
  return make_result({batch, width}, std::move(out), "batch_vecmat", {weights, rows},
                     [batch, count, width](detail::Node& self) {
                       const auto& wv = self.inputs[0]->values;
                       const auto& rv = self.inputs[1]->values;
                       auto gw = input_grad(self, 0);
                       auto gr = input_grad(self, 1);
                       for (std::size_t b = 0; b < batch; ++b) {
                         const double* g = self.grad.data() + b * width;
                         for (std::size_t i = 0; i < count; ++i) {
                           const std::size_t base = (b * count + i) * width;
                           if (!gw.empty()) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < width; ++c) dot += g[c] * rv[base + c];
                             gw[b * count + i] += dot;
                           }
                           if (!gr.empty()) {
                             const double w = wv[b * count + i];
                             for (std::size_t c = 0; c < width; ++c) gr[base + c] += w * g[c];
                           }
                         }
                       }
                     });
}

Tensor pairwise_add(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "pairwise_add");
  require_rank(b, 2, "pairwise_add");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("pairwise_add: widths differ in " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t ra = a.dim(0), rb = b.dim(0), width = a.dim(1);
  std::vector<double> out(ra * rb * width);
  for (std::size_t r = 0; r < ra; ++r) {
    for (std::size_t i = 0; i < rb; ++i) {
      double* o = out.data() + (r * rb + i) * width;
      for (std::size_t c = 0; c < width; ++c) o[c] = a.values()[r * width + c] + b.values()[i * width + c];
    }
  }
  return make_result({ra, rb, width}, std::move(out), "pairwise_add", {a, b}, [ra, rb, width](detail::Node& self) {
    auto ga = input_grad(self, 0);
    auto gb = input_grad(self, 1);
    for (std::size_t r = 0; r < ra; ++r) {
      for (std::size_t i = 0; i < rb; ++i) {
        const double* g = self.grad.data() + (r * rb + i) * width;
        if (!ga.empty()) {
          for (std::size_t c = 0; c < width; ++c) ga[r * width + c] += g[c];
        }
        if (!gb.empty()) {
          for (std::size_t c = 0; c < width; ++c) gb[i * width + c] += g[c];
        }
      }
    }
  });
}

Tensor add_per_step(const Tensor& x, const Tensor& y) {
  require_rank(x, 3, "add_per_step");
  require_rank(y, 2, "add_per_step");
  const std::size_t batch = x.dim(0), count = x.dim(1), width = x.dim(2);
  if (y.dim(0) != batch || y.dim(1) != width) {
    throw DimensionError("add_per_step: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < count; ++i) {
      double* o = out.data() + (b * count + i) * width;
      for (std::size_t c = 0; c < width; ++c) o[c] += y.values()[b * width + c];
    }
  }
  return make_result(x.shape(), std::move(out), "add_per_step", {x, y}, [batch, count, width](detail::Node& self) {
    if (auto gx = input_grad(self, 0); !gx.empty()) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
    if (auto gy = input_grad(self, 1); !gy.empty()) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < count; ++i) {
          const double* g = self.grad.data() + (b * count + i) * width;
          for (std::size_t c = 0; c < width; ++c) gy[b * width + c] += g[c];
        }
      }
    }
  });
}

Tensor cross_entropy(const Tensor& scores, std::size_t gold) {
  require_rank(scores, 1, "cross_entropy");
  const std::size_t golds[] = {gold};
  const double weights[] = {1.0};
  return cross_entropy(reshape(scores, {1, scores.dim(0)}), golds, weights);
}

Tensor cross_entropy(const Tensor& scores, std::span<const std::size_t> gold, std::span<const double> weights) {
  require_rank(scores, 2, "cross_entropy");
  const std::size_t rows = scores.dim(0), width = scores.dim(1);
  if (width == 0) throw DimensionError("cross_entropy: empty score axis");
  if (gold.size() != rows || weights.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(rows) + " score rows but " +
                         std::to_string(gold.size()) + " gold indices and " + std::to_string(weights.size()) +
                         " weights");
  }
  std::vector<double> probs(scores.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (gold[r] >= width) {
      throw IndexError("cross_entropy: gold index " + std::to_string(gold[r]) + " out of range for " +
                       std::to_string(width) + " classes");
    }
    const double* in = scores.values().data() + r * width;
    double* p = probs.data() + r * width;
    const double top = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) z += (p[c] = std::exp(in[c] - top));
    for (std::size_t c = 0; c < width; ++c) p[c] /= z;
    if (weights[r] != 0.0) loss += weights[r] * (top + std::log(z) - in[gold[r]]);
  }
  std::vector<std::size_t> golds(gold.begin(), gold.end());
  std::vector<double> w(weights.begin(), weights.end());
  return make_result({1}, {loss}, "cross_entropy", {scores},
                     [probs = std::move(probs), golds = std::move(golds), w = std::move(w), width](detail::Node& self) {
                       auto g = input_grad(self, 0);
                       if (g.empty()) return;
                       const double upstream = self.grad[0];
                       for (std::size_t r = 0; r < golds.size(); ++r) {
                         if (w[r] == 0.0) continue;
                         const double f = upstream * w[r];
                         for (std::size_t c = 0; c < width; ++c) g[r * width + c] += f * probs[r * width + c];
                         g[r * width + golds[r]] -= f;
                       }
                     });
}

}  // namespace wean
