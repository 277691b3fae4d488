#include "flowrnn/nets.hpp"

#include <cmath>

namespace flowrnn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

Mat uniform_matrix(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  // Row-major fill order keeps the draw sequence independent of storage order.
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

double init_bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1))); }

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw DomainError("unknown activation '" + name + "' (expected tanh or sigmoid)");
}

Vec activate(Activation act, const Vec& v) {
  switch (act) {
    case Activation::Tanh:
      return v.array().tanh();
    case Activation::Sigmoid:
      return (1.0 + (-v.array()).exp()).inverse();
  }
  return v;
}

Vec activation_slope(Activation act, const Vec& y) {
  switch (act) {
    case Activation::Tanh:
      return 1.0 - y.array().square();
    case Activation::Sigmoid:
      return y.array() * (1.0 - y.array());
  }
  return y;
}

double activation_at_zero(Activation act) { return act == Activation::Tanh ? 0.0 : 0.5; }

// FeedforwardNet

void FeedforwardNet::validate() const {
  require(A.rows() == b.size(), "feedforward: A rows must match b");
  require(C.cols() == A.rows(), "feedforward: C columns must match hidden width");
  require(C.rows() == d.size(), "feedforward: C rows must match d");
}

Vec FeedforwardNet::eval(const Vec& x) const {
  require(x.size() == A.cols(), "feedforward: input has dimension " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(A.cols()));
  return C * activate(activation, A * x + b) + d;
}

FeedforwardNet FeedforwardNet::random(int m, int p, int n, Activation act, Rng& rng) {
  FeedforwardNet net;
  net.A = uniform_matrix(p, m, init_bound(m), rng);
  net.b = Vec::Zero(p);
  net.C = uniform_matrix(n, p, init_bound(p), rng);
  net.d = Vec::Zero(n);
  net.activation = act;
  return net;
}

FeedforwardGrad::FeedforwardGrad(const FeedforwardNet& net)
    : A(Mat::Zero(net.A.rows(), net.A.cols())),
      b(Vec::Zero(net.b.size())),
      C(Mat::Zero(net.C.rows(), net.C.cols())),
      d(Vec::Zero(net.d.size())) {}

Vec forward(const FeedforwardNet& net, const Vec& x, FeedforwardCache& cache) {
  require(x.size() == net.A.cols(), "feedforward: input dimension mismatch");
  cache.input = x;
  cache.hidden = activate(net.activation, net.A * x + net.b);
  return net.C * cache.hidden + net.d;
}

Vec backward(const FeedforwardNet& net, const FeedforwardCache& cache, const Vec& upstream,
             FeedforwardGrad& grad) {
  require(upstream.size() == net.C.rows(), "feedforward: upstream gradient dimension mismatch");
  grad.C.noalias() += upstream * cache.hidden.transpose();
  grad.d += upstream;
  const Vec pre = (net.C.transpose() * upstream).cwiseProduct(activation_slope(net.activation, cache.hidden));
  grad.A.noalias() += pre * cache.input.transpose();
  grad.b += pre;
  return net.A.transpose() * pre;
}

// RnnCell

void RnnCell::validate() const {
  require(A.rows() == A.cols(), "rnn cell: A must be square");
  require(B.rows() == A.rows(), "rnn cell: B rows must match state dimension");
  require(b.size() == A.rows(), "rnn cell: bias must match state dimension");
}

Vec RnnCell::step(const Vec& z, const Vec& u) const {
  require(z.size() == A.cols(), "rnn cell: state has dimension " + std::to_string(z.size()) + ", expected " +
                                    std::to_string(A.cols()));
  require(u.size() == B.cols(), "rnn cell: input has dimension " + std::to_string(u.size()) + ", expected " +
                                    std::to_string(B.cols()));
  return activate(activation, A * z + B * u + b);
}

RnnCell RnnCell::random(int state_dim, int input_dim, Activation act, Rng& rng) {
  RnnCell cell;
  const double bound = init_bound(state_dim + input_dim);
  cell.A = uniform_matrix(state_dim, state_dim, bound, rng);
  cell.B = uniform_matrix(state_dim, input_dim, bound, rng);
  cell.b = Vec::Zero(state_dim);
  cell.activation = act;
  return cell;
}

RnnGrad::RnnGrad(const RnnCell& cell)
    : A(Mat::Zero(cell.A.rows(), cell.A.cols())), B(Mat::Zero(cell.B.rows(), cell.B.cols())), b(Vec::Zero(cell.b.size())) {}

Vec forward(const RnnCell& cell, const Vec& z, const Vec& u, RnnCache& cache) {
  cache.state = z;
  cache.input = u;
  cache.output = cell.step(z, u);
  return cache.output;
}

RnnInputGrad backward(const RnnCell& cell, const RnnCache& cache, const Vec& upstream, RnnGrad& grad) {
  require(upstream.size() == cell.A.rows(), "rnn cell: upstream gradient dimension mismatch");
  const Vec pre = upstream.cwiseProduct(activation_slope(cell.activation, cache.output));
  grad.A.noalias() += pre * cache.state.transpose();
  grad.B.noalias() += pre * cache.input.transpose();
  grad.b += pre;
  return {cell.A.transpose() * pre, cell.B.transpose() * pre};
}

// MlpNet

void MlpNet::validate() const {
  require(!layers.empty(), "mlp: at least one layer required");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    require(layers[i].W.rows() == layers[i].b.size(), "mlp: layer bias does not match weight rows");
    if (i > 0) require(layers[i].W.cols() == layers[i - 1].W.rows(), "mlp: consecutive layer dimensions do not chain");
  }
}

Vec MlpNet::eval(const Vec& x) const {
  require(x.size() == input_dim(), "mlp: input has dimension " + std::to_string(x.size()) + ", expected " +
                                       std::to_string(input_dim()));
  Vec v = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Vec next = layers[i].W * v + layers[i].b;
    v = (i + 1 < layers.size()) ? activate(activation, next) : std::move(next);
  }
  return v;
}

MlpNet MlpNet::random(const std::vector<int>& dims, Activation act, Rng& rng) {
  if (dims.size() < 2) throw DomainError("mlp needs at least input and output dimensions");
  MlpNet net;
  net.activation = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw DomainError("mlp dimensions must be positive");
    net.layers.push_back({uniform_matrix(dims[i + 1], dims[i], init_bound(dims[i]), rng), Vec::Zero(dims[i + 1])});
  }
  return net;
}

MlpNet MlpNet::affine(const Mat& weight, const Vec& offset) {
  MlpNet net;
  net.layers.push_back({weight, offset});
  net.validate();
  return net;
}

MlpGrad::MlpGrad(const MlpNet& net) {
  layers.reserve(net.layers.size());
  for (const auto& l : net.layers) layers.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
}

Vec forward(const MlpNet& net, const Vec& x, MlpCache& cache) {
  require(x.size() == net.input_dim(), "mlp: input dimension mismatch");
  const std::size_t n = net.layers.size();
  cache.values.resize(n + 1);
  cache.values[0] = x;
  for (std::size_t i = 0; i < n; ++i) {
    Vec next = net.layers[i].W * cache.values[i] + net.layers[i].b;
    cache.values[i + 1] = (i + 1 < n) ? activate(net.activation, next) : std::move(next);
  }
  return cache.values.back();
}

Vec backward(const MlpNet& net, const MlpCache& cache, const Vec& upstream, MlpGrad& grad) {
  require(upstream.size() == net.output_dim(), "mlp: upstream gradient dimension mismatch");
  Vec delta = upstream;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    if (i + 1 < net.layers.size()) delta = delta.cwiseProduct(activation_slope(net.activation, cache.values[i + 1]));
    grad.layers[i].W.noalias() += delta * cache.values[i].transpose();
    grad.layers[i].b += delta;
    delta = net.layers[i].W.transpose() * delta;
  }
  return delta;
}

// AffineMap / AffinePair

Vec AffineMap::operator()(const Vec& x) const {
  require(x.size() == M.cols(), "affine map: input dimension mismatch");
  return M * x + offset;
}

double AffinePair::identity_error() const {
  const Eigen::Index n = beta.M.cols();
  double worst = (gamma(beta(Vec::Zero(n)))).norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec e = Vec::Unit(n, i);
    worst = std::max(worst, (gamma(beta(e)) - e).norm());
  }
  return worst;
}

// Tensor visitors

namespace {

void visit(Mat& m, const TensorVisitor& fn) { fn(m.data(), m.size()); }
void visit(Vec& v, const TensorVisitor& fn) { fn(v.data(), v.size()); }

}  // namespace

void visit_tensors(const MlpNet& net, const ConstTensorVisitor& fn) {
  for (const auto& l : net.layers) {
    fn(l.W.data(), l.W.size());
    fn(l.b.data(), l.b.size());
  }
}

void visit_tensors(const RnnCell& cell, const ConstTensorVisitor& fn) {
  fn(cell.A.data(), cell.A.size());
  fn(cell.B.data(), cell.B.size());
  fn(cell.b.data(), cell.b.size());
}

void visit_tensors(MlpNet& net, const TensorVisitor& fn) {
  for (auto& l : net.layers) {
    visit(l.W, fn);
    visit(l.b, fn);
  }
}

void visit_tensors(RnnCell& cell, const TensorVisitor& fn) {
  visit(cell.A, fn);
  visit(cell.B, fn);
  visit(cell.b, fn);
}

void visit_tensors(FeedforwardNet& net, const TensorVisitor& fn) {
  visit(net.A, fn);
  visit(net.b, fn);
  visit(net.C, fn);
  visit(net.d, fn);
}

void visit_tensors(MlpGrad& grad, const TensorVisitor& fn) {
  for (auto& l : grad.layers) {
    visit(l.W, fn);
    visit(l.b, fn);
  }
}

void visit_tensors(RnnGrad& grad, const TensorVisitor& fn) {
  visit(grad.A, fn);
  visit(grad.B, fn);
  visit(grad.b, fn);
}

void visit_tensors(FeedforwardGrad& grad, const TensorVisitor& fn) {
  visit(grad.A, fn);
  visit(grad.b, fn);
  visit(grad.C, fn);
  visit(grad.d, fn);
}

}  // namespace flowrnn
