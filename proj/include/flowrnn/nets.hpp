#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowrnn/control.hpp"
#include "flowrnn/errors.hpp"

namespace flowrnn {

/// Bounded, continuous, nonconstant activations only.
enum class Activation { Tanh, Sigmoid };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

Vec activate(Activation act, const Vec& v);
/// sigma'(v) expressed through y = sigma(v).
Vec activation_slope(Activation act, const Vec& y);
/// sigma(0).
double activation_at_zero(Activation act);

using Rng = std::mt19937_64;

/// h(x) = C sigma(A x + b) + d, one hidden layer of width p.
struct FeedforwardNet {
  Mat A;  // p x m
  Vec b;  // p
  Mat C;  // n x p
  Vec d;  // n
  Activation activation = Activation::Tanh;

  int input_dim() const { return static_cast<int>(A.cols()); }
  int hidden_dim() const { return static_cast<int>(A.rows()); }
  int output_dim() const { return static_cast<int>(C.rows()); }

  void validate() const;
  Vec eval(const Vec& x) const;

  static FeedforwardNet random(int m, int p, int n, Activation act, Rng& rng);
};

/// z' = sigma(A z + B u + b): the restricted class with identity output map.
struct RnnCell {
  Mat A;  // d_z x d_z
  Mat B;  // d_z x d_in
  Vec b;  // d_z
  Activation activation = Activation::Tanh;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }

  void validate() const;
  Vec step(const Vec& z, const Vec& u) const;

  static RnnCell random(int state_dim, int input_dim, Activation act, Rng& rng);
};

struct DenseLayer {
  Mat W;
  Vec b;
};

/// Multi-layer perceptron: activation after every layer but the last, which is
/// linear. With a single layer it is an affine map.
struct MlpNet {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::Tanh;

  int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().W.rows()); }
  bool is_affine() const { return layers.size() == 1; }

  void validate() const;
  Vec eval(const Vec& x) const;

  /// dims = (input, hidden..., output).
  static MlpNet random(const std::vector<int>& dims, Activation act, Rng& rng);
  static MlpNet affine(const Mat& weight, const Vec& offset);
};

/// x -> M x + offset.
struct AffineMap {
  Mat M;
  Vec offset;

  Vec operator()(const Vec& x) const;
};

/// Decoder/encoder pair with gamma o beta = id.
struct AffinePair {
  AffineMap gamma;
  AffineMap beta;

  /// max |gamma(beta(x)) - x| over the origin and the standard basis.
  double identity_error() const;
  bool is_left_inverse(double tol = 1e-12) const { return identity_error() <= tol; }
};

// Reverse mode. Forward caches hold what backward needs; gradient structs
// mirror parameter layout and are accumulated into (+=).

struct FeedforwardCache {
  Vec input;
  Vec hidden;  // sigma(A x + b)
};

struct FeedforwardGrad {
  Mat A;
  Vec b;
  Mat C;
  Vec d;
  explicit FeedforwardGrad(const FeedforwardNet& net);
};

Vec forward(const FeedforwardNet& net, const Vec& x, FeedforwardCache& cache);
/// Accumulates parameter gradients into `grad` and returns dL/dx.
Vec backward(const FeedforwardNet& net, const FeedforwardCache& cache, const Vec& upstream, FeedforwardGrad& grad);

struct RnnCache {
  Vec state;
  Vec input;
  Vec output;
};

struct RnnGrad {
  Mat A;
  Mat B;
  Vec b;
  explicit RnnGrad(const RnnCell& cell);
};

struct RnnInputGrad {
  Vec state;
  Vec input;
};

Vec forward(const RnnCell& cell, const Vec& z, const Vec& u, RnnCache& cache);
RnnInputGrad backward(const RnnCell& cell, const RnnCache& cache, const Vec& upstream, RnnGrad& grad);

struct MlpCache {
  std::vector<Vec> values;  // values[0] = input, values[i + 1] = output of layer i
};

struct MlpGrad {
  std::vector<DenseLayer> layers;
  explicit MlpGrad(const MlpNet& net);
};

Vec forward(const MlpNet& net, const Vec& x, MlpCache& cache);
Vec backward(const MlpNet& net, const MlpCache& cache, const Vec& upstream, MlpGrad& grad);

/// Flat views of parameters (or gradients) in a fixed order, used by the optimiser.
using TensorVisitor = std::function<void(double* data, Eigen::Index size)>;
void visit_tensors(MlpNet& net, const TensorVisitor& fn);
void visit_tensors(RnnCell& cell, const TensorVisitor& fn);
void visit_tensors(FeedforwardNet& net, const TensorVisitor& fn);
void visit_tensors(MlpGrad& grad, const TensorVisitor& fn);
void visit_tensors(RnnGrad& grad, const TensorVisitor& fn);
void visit_tensors(FeedforwardGrad& grad, const TensorVisitor& fn);

using ConstTensorVisitor = std::function<void(const double* data, Eigen::Index size)>;
void visit_tensors(const MlpNet& net, const ConstTensorVisitor& fn);
void visit_tensors(const RnnCell& cell, const ConstTensorVisitor& fn);

/// Psi_f(j, x0, inputs) for j = 0..n, i.e. n + 1 states.
template <class State, class Input, class Step>
std::vector<State> recursion_rollout(Step&& step, std::size_t n, const State& x0, std::span<const Input> inputs) {
  if (inputs.size() < n) {
    throw DomainError("recursion needs " + std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<State> states;
  states.reserve(n + 1);
  states.push_back(x0);
  for (std::size_t k = 0; k < n; ++k) states.push_back(step(states.back(), inputs[k]));
  return states;
}

}  // namespace flowrnn
