#include "tcbf/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tcbf/errors.hpp"

namespace tcbf::ad {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

/// Builds an op output. The backward closure is only kept when some input
/// tracks gradients and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) {
      if (t.defined() && t.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    for (const Tensor& t : inputs) node->parents.push_back(t.defined() ? t.shared_node() : nullptr);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

/// Gradient sink of parent `i`, or null when it needs none.
std::vector<double>* parent_grad(Node& n, std::size_t i) {
  Node* p = n.parents[i].get();
  if (p == nullptr || !p->requires_grad) return nullptr;
  return &p->grad_buffer();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
}

struct Geometry {
  std::size_t N, C, H, W, kH, kW, Ho, Wo, stride, padding;
};

/// Valid output range [lo, hi) along one axis for kernel tap `k`.
std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t in, std::size_t out, std::size_t stride,
                                                std::size_t padding) {
  std::size_t lo = 0;
  while (lo < out && lo * stride + k < padding) ++lo;
  std::size_t hi = lo;
  while (hi < out && hi * stride + k < padding + in) ++hi;
  return {lo, hi};
}

void im2col(const double* x, double* cols, const Geometry& g) {
  const std::size_t P = g.Ho * g.Wo;
  const std::size_t NP = g.N * P;
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.C; ++c) {
    for (std::size_t ky = 0; ky < g.kH; ++ky) {
      const auto [ylo, yhi] = valid_range(ky, g.H, g.Ho, g.stride, g.padding);
      for (std::size_t kx = 0; kx < g.kW; ++kx, ++k) {
        const auto [xlo, xhi] = valid_range(kx, g.W, g.Wo, g.stride, g.padding);
        double* row = cols + k * NP;
        for (std::size_t n = 0; n < g.N; ++n) {
          const double* plane = x + (n * g.C + c) * g.H * g.W;
          double* dst = row + n * P;
          for (std::size_t oy = 0; oy < g.Ho; ++oy) {
            double* d = dst + oy * g.Wo;
            if (oy < ylo || oy >= yhi) {
              std::fill(d, d + g.Wo, 0.0);
              continue;
            }
            const double* src = plane + (oy * g.stride + ky - g.padding) * g.W;
            std::fill(d, d + xlo, 0.0);
            for (std::size_t ox = xlo; ox < xhi; ++ox) d[ox] = src[ox * g.stride + kx - g.padding];
            std::fill(d + xhi, d + g.Wo, 0.0);
          }
        }
      }
    }
  }
}

void col2im(const double* cols, double* x, const Geometry& g) {
  const std::size_t P = g.Ho * g.Wo;
  const std::size_t NP = g.N * P;
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.C; ++c) {
    for (std::size_t ky = 0; ky < g.kH; ++ky) {
      const auto [ylo, yhi] = valid_range(ky, g.H, g.Ho, g.stride, g.padding);
      for (std::size_t kx = 0; kx < g.kW; ++kx, ++k) {
        const auto [xlo, xhi] = valid_range(kx, g.W, g.Wo, g.stride, g.padding);
        const double* row = cols + k * NP;
        for (std::size_t n = 0; n < g.N; ++n) {
          double* plane = x + (n * g.C + c) * g.H * g.W;
          const double* src = row + n * P;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const double* s = src + oy * g.Wo;
            double* d = plane + (oy * g.stride + ky - g.padding) * g.W;
            for (std::size_t ox = xlo; ox < xhi; ++ox) d[ox * g.stride + kx - g.padding] += s[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  require(numel(shape) == data.size(), "tensor data length " + std::to_string(data.size()) +
                                           " does not match shape " + to_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

double Tensor::item() const {
  require(size() == 1, "item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS: (node, next parent index).
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p != nullptr && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1, "backward requires a scalar loss");
  require(loss.requires_grad(), "backward: loss does not depend on any tracked tensor");
  const Tape tape = Tape::record(loss);
  loss.node()->grad_buffer()[0] += 1.0;
  const auto nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor conv2d(const Tensor& input_in, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  Tensor input = input_in.shape().size() == 3
                     ? reshape(input_in, {1, input_in.dim(0), input_in.dim(1), input_in.dim(2)})
                     : input_in;
  require(input.shape().size() == 4, "conv2d: input must be [N,C,H,W], got " + to_string(input.shape()));
  require(kernels.shape().size() == 4, "conv2d: kernels must be [O,C,kH,kW], got " + to_string(kernels.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t O = kernels.dim(0), kH = kernels.dim(2), kW = kernels.dim(3);
  require(kernels.dim(1) == C, "conv2d: kernel channels " + std::to_string(kernels.dim(1)) +
                                   " do not match input channels " + std::to_string(C));
  require(H + 2 * padding >= kH && W + 2 * padding >= kW, "conv2d: kernel larger than padded input");
  if (bias.defined()) require(bias.shape() == Shape{O}, "conv2d: bias must be [O]");

  const std::size_t Ho = (H + 2 * padding - kH) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kW) / stride + 1;
  const std::size_t K = C * kH * kW;
  const std::size_t P = Ho * Wo;
  const std::size_t NP = N * P;

  // im2col, row-major K x NP: row k holds tap k of every output position,
  // column n*P + oy*Wo + ox.
  const std::shared_ptr<double[]> cols(new double[K * NP]);
  im2col(input.data().data(), cols.get(), Geometry{N, C, H, W, kH, kW, Ho, Wo, stride, padding});

  ConstRowMap wmat(kernels.data().data(), Eigen::Index(O), Eigen::Index(K));
  ConstRowMap cmat(cols.get(), Eigen::Index(K), Eigen::Index(NP));
  RowMat prod = wmat * cmat;  // O x NP

  std::vector<double> out(N * O * P);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      const double b = bias.defined() ? bias.data()[o] : 0.0;
      const double* src = prod.data() + o * NP + n * P;
      double* dst = out.data() + (n * O + o) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
    }
  }

  const Geometry geo{N, C, H, W, kH, kW, Ho, Wo, stride, padding};
  Tensor result = make_result(
      {N, O, Ho, Wo}, std::move(out), {input, kernels, bias},
      [=](Node& self) {
        RowMat g(static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(NP));
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) {
            const double* src = self.grad.data() + (n * O + o) * P;
            std::copy(src, src + P, g.data() + o * NP + n * P);
          }
        }
        const Node& knode = *self.parents[1];
        if (auto* gw = parent_grad(self, 1)) {
          RowMap(gw->data(), Eigen::Index(O), Eigen::Index(K)).noalias() +=
              g * ConstRowMap(cols.get(), Eigen::Index(K), Eigen::Index(NP)).transpose();
        }
        if (auto* gb = parent_grad(self, 2)) {
          for (std::size_t o = 0; o < O; ++o) (*gb)[o] += g.row(Eigen::Index(o)).sum();
        }
        if (auto* gx = parent_grad(self, 0)) {
          RowMat gcols = ConstRowMap(knode.value.data(), Eigen::Index(O), Eigen::Index(K)).transpose() * g;
          col2im(gcols.data(), gx->data(), geo);
        }
      });
  return input_in.shape().size() == 3 ? reshape(result, {O, Ho, Wo}) : result;
}

Tensor dense(const Tensor& input_in, const Tensor& weights, const Tensor& bias) {
  Tensor input = input_in.shape().size() == 1 ? reshape(input_in, {1, input_in.dim(0)}) : input_in;
  require(input.shape().size() == 2, "dense: input must be [N,in], got " + to_string(input.shape()));
  require(weights.shape().size() == 2, "dense: weights must be [out,in], got " + to_string(weights.shape()));
  const std::size_t N = input.dim(0), in = input.dim(1), out = weights.dim(0);
  require(weights.dim(1) == in, "dense: weights " + to_string(weights.shape()) + " incompatible with input " +
                                    to_string(input.shape()));
  if (bias.defined()) require(bias.shape() == Shape{out}, "dense: bias must be [out]");

  ConstRowMap xm(input.data().data(), Eigen::Index(N), Eigen::Index(in));
  ConstRowMap wm(weights.data().data(), Eigen::Index(out), Eigen::Index(in));
  std::vector<double> y(N * out);
  RowMap ym(y.data(), Eigen::Index(N), Eigen::Index(out));
  ym.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < out; ++o) y[n * out + o] += bias.data()[o];
    }
  }

  Tensor result = make_result({N, out}, std::move(y), {input, weights, bias}, [=](Node& self) {
    ConstRowMap gy(self.grad.data(), Eigen::Index(N), Eigen::Index(out));
    const Node& xn = *self.parents[0];
    const Node& wn = *self.parents[1];
    if (auto* gx = parent_grad(self, 0)) {
      RowMap(gx->data(), Eigen::Index(N), Eigen::Index(in)).noalias() +=
          gy * ConstRowMap(wn.value.data(), Eigen::Index(out), Eigen::Index(in));
    }
    if (auto* gw = parent_grad(self, 1)) {
      RowMap(gw->data(), Eigen::Index(out), Eigen::Index(in)).noalias() +=
          gy.transpose() * ConstRowMap(xn.value.data(), Eigen::Index(N), Eigen::Index(in));
    }
    if (auto* gb = parent_grad(self, 2)) {
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < out; ++o) (*gb)[o] += self.grad[n * out + o];
      }
    }
  });
  return input_in.shape().size() == 1 ? reshape(result, {out}) : result;
}

Tensor relu(const Tensor& x) {
  std::vector<double> y(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result(x.shape(), std::move(y), {x}, [](Node& self) {
    const auto& xv = self.parents[0]->value;
    auto* gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0.0) (*gx)[i] += self.grad[i];
    }
  });
}

Tensor softplus(const Tensor& x) {
  std::vector<double> y(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(xv[i], 0.0) + std::log1p(std::exp(-std::abs(xv[i])));
  return make_result(x.shape(), std::move(y), {x}, [](Node& self) {
    const auto& xv = self.parents[0]->value;
    auto* gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double e = std::exp(-std::abs(xv[i]));
      const double sig = xv[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      (*gx)[i] += self.grad[i] * sig;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * factor;
  return make_result(x.shape(), std::move(y), {x}, [factor](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& x, double offset) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] + offset;
  return make_result(x.shape(), std::move(y), {x}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    for (double& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, "mean of empty tensor");
  return scale(sum(x), 1.0 / double(x.size()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  std::vector<double> y(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(y), {x}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> indices) {
  std::vector<double> y(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < x.size(), "gather: index out of range");
    y[i] = x.data()[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Shape shape{idx.size()};
  return make_result(std::move(shape), std::move(y), {x}, [idx = std::move(idx)](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) (*g)[idx[i]] += self.grad[i];
  });
}

}  // namespace tcbf::ad
