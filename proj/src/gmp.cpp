#include "fgp/gmp.hpp"

#include <Eigen/Eigenvalues>

namespace fgp::gmp {

namespace {

void check_form(const GaussianMessage& m, Param expected, const char* where) {
  if (m.param != expected) {
    throw DimensionError(std::string(where) + ": message must be in " +
                         (expected == Param::MeanCov ? "MeanCov"
                                                     : "WeightedMean") +
                         " form");
  }
}

void check_same_dim(const GaussianMessage& x, const GaussianMessage& y,
                    const char* where) {
  if (x.dim() != y.dim()) {
    throw DimensionError(std::string(where) + ": dimension mismatch (" +
                         std::to_string(x.dim()) + " vs " +
                         std::to_string(y.dim()) + ")");
  }
}

// Solves M X = RHS by LU with full pivoting; throws SingularError when M
// is not invertible to working precision.
CMatrix solve(const CMatrix& m, const CMatrix& rhs, const char* where) {
  Eigen::FullPivLU<CMatrix> lu(m);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) {
    throw SingularError(std::string(where) + ": singular matrix");
  }
  return lu.solve(rhs);
}

}  // namespace

bool GaussianMessage::is_vacuous() const {
  return param == Param::WeightedMean && cov.isZero(0.0) && mean.isZero(0.0);
}

void GaussianMessage::validate() const {
  if (mean.size() != cov.rows() || cov.rows() != cov.cols()) {
    throw DimensionError("GaussianMessage: mean/cov dimension mismatch");
  }
  double scale = cov.cwiseAbs().maxCoeff();
  if (scale > 0) {
    double asym = (cov - cov.adjoint()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
      throw DimensionError("GaussianMessage: matrix not Hermitian");
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitianize(cov),
                                              Eigen::EigenvaluesOnly);
    double max_ev = es.eigenvalues().maxCoeff();
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(max_ev, 0.0)) {
      throw DimensionError("GaussianMessage: matrix not PSD");
    }
  }
}

GaussianMessage mean_cov(CVector mean, CMatrix cov) {
  GaussianMessage m{std::move(mean), std::move(cov), Param::MeanCov};
  if (m.mean.size() != m.cov.rows() || m.cov.rows() != m.cov.cols()) {
    throw DimensionError("mean_cov: mean/cov dimension mismatch");
  }
  return m;
}

GaussianMessage weighted_mean(CVector wm, CMatrix weight) {
  GaussianMessage m{std::move(wm), std::move(weight), Param::WeightedMean};
  if (m.mean.size() != m.cov.rows() || m.cov.rows() != m.cov.cols()) {
    throw DimensionError("weighted_mean: dimension mismatch");
  }
  return m;
}

GaussianMessage vacuous(Eigen::Index dim) {
  return weighted_mean(CVector::Zero(dim), CMatrix::Zero(dim, dim));
}

CMatrix hermitianize(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

GaussianMessage equality_update(const GaussianMessage& x,
                                const GaussianMessage& y) {
  check_same_dim(x, y, "equality_update");
  GaussianMessage xw = x.param == Param::WeightedMean
                           ? x
                           : convert(x, Param::WeightedMean);
  GaussianMessage yw = y.param == Param::WeightedMean
                           ? y
                           : convert(y, Param::WeightedMean);
  return weighted_mean(xw.mean + yw.mean, hermitianize(xw.cov + yw.cov));
}

GaussianMessage adder_update(const GaussianMessage& x,
                             const GaussianMessage& y, bool negate_y) {
  check_same_dim(x, y, "adder_update");
  check_form(x, Param::MeanCov, "adder_update");
  check_form(y, Param::MeanCov, "adder_update");
  CVector mean = negate_y ? CVector(x.mean - y.mean) : CVector(x.mean + y.mean);
  return mean_cov(std::move(mean), hermitianize(x.cov + y.cov));
}

GaussianMessage matmult_update(const GaussianMessage& msg,
                               const StateMatrix& a, Direction direction) {
  const CMatrix& A = a.a;
  if (direction == Direction::Forward) {
    check_form(msg, Param::MeanCov, "matmult_update");
    if (A.cols() != msg.dim()) {
      throw DimensionError("matmult_update: state matrix does not conform");
    }
    return mean_cov(A * msg.mean, hermitianize(A * msg.cov * A.adjoint()));
  }
  check_form(msg, Param::WeightedMean, "matmult_update");
  if (A.rows() != msg.dim()) {
    throw DimensionError("matmult_update: state matrix does not conform");
  }
  return weighted_mean(A.adjoint() * msg.mean,
                       hermitianize(A.adjoint() * msg.cov * A));
}

GaussianMessage compound_mult_eq_update(const GaussianMessage& x,
                                        const GaussianMessage& y,
                                        const StateMatrix& a) {
  check_form(x, Param::MeanCov, "compound_mult_eq_update");
  check_form(y, Param::MeanCov, "compound_mult_eq_update");
  const CMatrix& A = a.a;
  if (A.cols() != x.dim() || A.rows() != y.dim()) {
    throw DimensionError("compound_mult_eq_update: state matrix does not conform");
  }
  CMatrix vxah = x.cov * A.adjoint();                 // V_x A^H
  CMatrix g = hermitianize(y.cov + A * vxah);         // V_y + A V_x A^H
  // Gain K = V_x A^H G^-1, via a solve on the Hermitian pivot matrix.
  CMatrix k = solve(g, vxah.adjoint(), "compound_mult_eq_update").adjoint();
  CVector mean = x.mean + k * (y.mean - A * x.mean);
  CMatrix cov = hermitianize(x.cov - k * vxah.adjoint());
  return mean_cov(std::move(mean), std::move(cov));
}

CMatrix faddeev(const CMatrix& a, const CMatrix& b, const CMatrix& c,
                const CMatrix& d) {
  const Eigen::Index q = a.rows();
  if (a.cols() != q) throw DimensionError("faddeev: a must be square");
  if (b.rows() != q || c.cols() != q || d.rows() != c.rows() ||
      d.cols() != b.cols()) {
    throw DimensionError("faddeev: block dimensions do not conform");
  }
  const Eigen::Index p = c.rows();
  const Eigen::Index m = b.cols();
  CMatrix blk(q + p, q + m);
  blk << a, b, c, d;

  for (Eigen::Index step = 0; step < q; ++step) {
    // Partial pivoting confined to the remaining a-block rows.
    Eigen::Index best = step;
    double best_mag = std::norm(blk(step, step));
    for (Eigen::Index r = step + 1; r < q; ++r) {
      double mag = std::norm(blk(r, step));
      if (mag > best_mag) {
        best = r;
        best_mag = mag;
      }
    }
    if (best_mag == 0.0) {
      throw SingularError("faddeev: zero pivot column at step " +
                          std::to_string(step));
    }
    if (best != step) blk.row(step).swap(blk.row(best));
    const Complex pivot = blk(step, step);
    for (Eigen::Index r = step + 1; r < q + p; ++r) {
      Complex mult = blk(r, step) / pivot;
      for (Eigen::Index col = step + 1; col < q + m; ++col) {
        blk(r, col) -= mult * blk(step, col);
      }
      blk(r, step) = Complex(0, 0);
    }
  }
  return blk.block(q, q, p, m);
}

GaussianMessage convert(const GaussianMessage& msg, Param target) {
  if (msg.param == target) return msg;
  CMatrix inv = solve(msg.cov, CMatrix::Identity(msg.dim(), msg.dim()),
                      "convert");
  return {inv * msg.mean, hermitianize(inv), target};
}

std::vector<GaussianMessage> run_rls_reference(
    const std::vector<StateMatrix>& a_rows,
    const std::vector<GaussianMessage>& observations,
    const GaussianMessage& prior, const GaussianMessage& noise) {
  if (a_rows.size() != observations.size()) {
    throw DimensionError("run_rls_reference: sections do not match");
  }
  std::vector<GaussianMessage> posteriors;
  posteriors.reserve(a_rows.size());
  GaussianMessage state = prior;
  for (size_t i = 0; i < a_rows.size(); ++i) {
    GaussianMessage msg_y = adder_update(observations[i], noise, true);
    state = compound_mult_eq_update(state, msg_y, a_rows[i]);
    posteriors.push_back(state);
  }
  return posteriors;
}

}  // namespace fgp::gmp
