#include "flowrnn/lift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace flowrnn {

RankFactorization rank_factorize(const Mat& T, double tol) {
  if (!(tol > 0.0)) throw DomainError("rank tolerance must be positive");
  const Eigen::Index rows = T.rows();
  const Eigen::Index cols = T.cols();
  RankFactorization f;
  if (rows == 0) throw DimensionError("cannot factorise a matrix with no rows");

  Eigen::JacobiSVD<Mat> svd(T, Eigen::ComputeFullU | Eigen::ComputeThinV);
  Mat U = svd.matrixU();
  Mat V = svd.matrixV();
  const Vec& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;

  int r = 0;
  if (smax > 0.0) {
    while (r < s.size() && s(r) > tol * smax) ++r;
  }
  f.rank = r;
  f.min_retained_ratio = r > 0 ? s(r - 1) / smax : 1.0;
  f.max_discarded_ratio = (r < s.size() && smax > 0.0) ? s(r) / smax : 0.0;

  // Fix singular-vector signs so the largest-magnitude entry of each u_i is positive.
  for (int i = 0; i < r; ++i) {
    Eigen::Index at = 0;
    U.col(i).cwiseAbs().maxCoeff(&at);
    if (U(at, i) < 0.0) {
      U.col(i) *= -1.0;
      V.col(i) *= -1.0;
    }
  }

  f.M = U;
  f.M_inv = U.transpose();
  f.T1 = s.head(r).asDiagonal() * V.leftCols(r).transpose();
  f.T1_pinv = V.leftCols(r) * s.head(r).cwiseInverse().asDiagonal();
  if (r == 0) {
    f.T1.resize(0, cols);
    f.T1_pinv.resize(cols, 0);
  }
  return f;
}

LiftedRnn lift_to_rnn(const FeedforwardNet& g, int state_dim, double rank_tol) {
  g.validate();
  const int dx = state_dim;
  const int du = g.input_dim() - dx;
  const int p = g.hidden_dim();
  if (dx <= 0 || du < 0) throw DimensionError("lift: state dimension must be in (0, input dimension]");
  if (g.output_dim() != dx) {
    throw DimensionError("lift: output dimension " + std::to_string(g.output_dim()) +
                         " must equal state dimension " + std::to_string(dx));
  }

  const Mat Ax = g.A.leftCols(dx);
  const Mat Bu = g.A.rightCols(du);
  const RankFactorization f = rank_factorize(g.C, rank_tol);
  const int r = f.rank;
  const int rest = dx - r;
  const int dz = p + rest;

  const Vec c_prime = f.M_inv * g.d;
  const Vec c1 = c_prime.head(r);
  const Vec c2 = c_prime.tail(rest);

  // Q = M diag(T1, I), Q+ = diag(T1+, I) M^{-1}
  Mat blk = Mat::Zero(dx, dz);
  blk.topLeftCorner(r, p) = f.T1;
  blk.bottomRightCorner(rest, rest).setIdentity();
  const Mat Q = f.M * blk;
  Mat blk_pinv = Mat::Zero(dz, dx);
  blk_pinv.topLeftCorner(p, r) = f.T1_pinv;
  blk_pinv.bottomRightCorner(rest, rest).setIdentity();
  const Mat Q_pinv = blk_pinv * f.M_inv;

  Mat A_tilde = Mat::Zero(dz, dz);
  A_tilde.topRows(p) = Ax * Q;
  Mat B_tilde = Mat::Zero(dz, du);
  B_tilde.topRows(p) = Bu;
  Vec b_tilde = Vec::Zero(dz);
  b_tilde.head(p) = g.b;
  Vec c_tilde(dz);
  c_tilde.head(p) = f.T1_pinv * c1;
  c_tilde.tail(rest) = c2.array() - activation_at_zero(g.activation);

  LiftedRnn lift;
  lift.cell.A = A_tilde;
  lift.cell.B = B_tilde;
  lift.cell.b = b_tilde + A_tilde * c_tilde;
  lift.cell.activation = g.activation;
  lift.pair.gamma = AffineMap{Q, Q * c_tilde};
  lift.pair.beta = AffineMap{Q_pinv, -c_tilde};
  lift.source = g;
  lift.state_dim = dx;
  lift.input_dim = du;
  lift.hidden_dim = p;
  lift.rank = r;

  Eigen::JacobiSVD<Mat> msvd(f.M);
  const Vec& ms = msvd.singularValues();
  lift.m_condition = ms(ms.size() - 1) > 0.0 ? ms(0) / ms(ms.size() - 1) : std::numeric_limits<double>::infinity();
  if (lift.m_condition > 1e12) {
    lift.warning = "ill-conditioned rank factor M (condition number " + std::to_string(lift.m_condition) + ")";
  }
  if (f.max_discarded_ratio > 1e-2 * rank_tol) {
    // A singular value just under the cutoff was dropped.
    const std::string note = "singular value ratio " + std::to_string(f.max_discarded_ratio) + " treated as zero";
    lift.warning = lift.warning ? *lift.warning + "; " + note : note;
  }
  return lift;
}

LiftReport verify_lift(const LiftedRnn& lift, const FeedforwardNet& g, int trials, int horizon, const BoxSet& x_box,
                       const BoxSet& u_box, std::uint64_t seed) {
  if (x_box.dim() != lift.state_dim || u_box.dim() != lift.input_dim) {
    throw DimensionError("verify_lift: sampling boxes do not match the lifted dimensions");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sample = [&](const BoxSet& box) {
    Vec v(box.dim());
    for (int i = 0; i < box.dim(); ++i) v[i] = box.lower[i] + unit(rng) * (box.upper[i] - box.lower[i]);
    return v;
  };

  const auto g_step = [&](const Vec& x, const Vec& u) {
    Vec xu(x.size() + u.size());
    xu << x, u;
    return g.eval(xu);
  };
  const auto h_step = [&](const Vec& z, const Vec& u) { return lift.cell.step(z, u); };

  LiftReport report;
  for (int trial = 0; trial < trials; ++trial) {
    const Vec x = sample(x_box);
    std::vector<Vec> inputs;
    for (int k = 0; k < horizon; ++k) inputs.push_back(sample(u_box));
    const std::span<const Vec> in(inputs);
    const auto ref = recursion_rollout(g_step, static_cast<std::size_t>(horizon), x, in);
    const auto hidden = recursion_rollout(h_step, static_cast<std::size_t>(horizon), lift.pair.beta(x), in);
    for (int n = 0; n <= horizon; ++n) {
      const double err = (lift.pair.gamma(hidden[n]) - ref[n]).norm();
      const double scale = std::max(ref[n].norm(), std::numeric_limits<double>::min());
      report.max_abs_error = std::max(report.max_abs_error, err);
      report.max_rel_error = std::max(report.max_rel_error, err / scale);
    }
  }
  return report;
}

}  // namespace flowrnn
