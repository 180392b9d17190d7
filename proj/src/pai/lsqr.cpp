#include "pai/lsqr.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pai/errors.hpp"

namespace pai {

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void scale(std::vector<double>& v, double a) {
  for (double& x : v) x *= a;
}

}  // namespace

LsqrResult lsqr_solve(const LinearOperator& op, const std::vector<double>& b,
                      const LsqrOptions& opts) {
  if (opts.max_iters < 1) {
    fail(ErrorCode::config, "lsqr max_iters must be positive");
  }
  if (opts.atol < 0 || opts.btol < 0) {
    fail(ErrorCode::config, "lsqr tolerances must be nonnegative");
  }
  if (b.size() != op.range_size()) {
    fail(ErrorCode::check, "lsqr rhs length does not match the operator");
  }
  const std::size_t n = op.domain_size();
  const std::size_t m = op.range_size();

  LsqrResult res;
  res.solution.assign(n, 0.0);
  res.b_norm = norm2(b);

  // Golub-Kahan vectors.
  std::vector<double> u = b;
  std::vector<double> v(n, 0.0);
  std::vector<double> tmp_m(m, 0.0);
  std::vector<double> tmp_n(n, 0.0);

  double beta = res.b_norm;
  if (opts.record_residuals) res.residual_history.push_back(beta);
  res.residual_norm = beta;
  if (beta == 0.0) {
    res.breakdown = true;  // b = 0: x = 0 is exact
    return res;
  }
  scale(u, 1.0 / beta);

  op.apply_adjoint(u.data(), v.data());
  double alpha = norm2(v);
  if (alpha == 0.0) {
    res.breakdown = true;
    return res;
  }
  scale(v, 1.0 / alpha);

  std::vector<double> w = v;
  double phibar = beta;
  double rhobar = alpha;
  double anorm2 = alpha * alpha;  // running estimate of ||A||_F^2

  for (int it = 1; it <= opts.max_iters; ++it) {
    // Bidiagonalization step: u <- A v - alpha u, v <- A' u - beta v.
    op.apply(v.data(), tmp_m.data());
    for (std::size_t i = 0; i < m; ++i) u[i] = tmp_m[i] - alpha * u[i];
    beta = norm2(u);
    anorm2 += beta * beta;
    if (beta == 0.0) {
      res.breakdown = true;
      res.iterations = it;
      break;
    }
    scale(u, 1.0 / beta);

    op.apply_adjoint(u.data(), tmp_n.data());
    for (std::size_t i = 0; i < n; ++i) v[i] = tmp_n[i] - beta * v[i];
    alpha = norm2(v);
    if (alpha != 0.0) scale(v, 1.0 / alpha);

    // Givens rotation eliminating the subdiagonal.
    const double rho = std::hypot(rhobar, beta);
    const double c = rhobar / rho;
    const double s = beta / rho;
    const double theta = s * alpha;
    rhobar = -c * alpha;
    const double phi = c * phibar;
    phibar = s * phibar;

    const double t1 = phi / rho;
    const double t2 = -theta / rho;
    for (std::size_t i = 0; i < n; ++i) {
      res.solution[i] += t1 * w[i];
      w[i] = v[i] + t2 * w[i];
    }

    res.iterations = it;
    res.residual_norm = phibar;
    if (opts.record_residuals) res.residual_history.push_back(phibar);
    anorm2 += alpha * alpha;

    if (alpha == 0.0) {
      res.breakdown = true;
      break;
    }

    // Standard stopping rules; atol = btol = 0 disables both unless the
    // residual is exactly zero.
    const double anorm = std::sqrt(anorm2);
    const double xnorm = norm2(res.solution);
    const double arnorm = alpha * std::abs(c) * phibar;  // ||A' r||
    const double test1 = phibar / res.b_norm;
    const double test2 =
        (anorm > 0 && phibar > 0) ? arnorm / (anorm * phibar) : 0.0;
    if (test1 <= opts.btol + opts.atol * anorm * xnorm / res.b_norm ||
        test2 <= opts.atol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

std::size_t WaveLinearOperator::domain_size() const {
  const SimGrid& g = op_.grid();
  return static_cast<std::size_t>(g.nx) * g.ny * g.nz;
}

std::size_t WaveLinearOperator::range_size() const {
  return op_.geometry().active.size() * static_cast<std::size_t>(
                                            op_.grid().nt);
}

void WaveLinearOperator::apply(const double* x, double* y) const {
  const SimGrid& g = op_.grid();
  Volume vol = Volume::zeros(g.nx, g.ny, g.nz);
  std::copy(x, x + vol.values.size(), vol.values.begin());
  Traces t = op_.forward(vol);
  std::copy(t.values.begin(), t.values.end(), y);
}

void WaveLinearOperator::apply_adjoint(const double* y, double* x) const {
  const SimGrid& g = op_.grid();
  Traces t = Traces::zeros(op_.geometry(), g.nt);
  std::copy(y, y + t.values.size(), t.values.begin());
  Volume vol = op_.adjoint(t);
  std::copy(vol.values.begin(), vol.values.end(), x);
}

LsqrReconstruction lsqr_reconstruct(const WaveOperator& op,
                                    const Traces& y_obs,
                                    const LsqrOptions& opts) {
  WaveLinearOperator lin(op);
  if (y_obs.values.size() != lin.range_size()) {
    fail(ErrorCode::check, "observed traces do not match the operator layout");
  }
  LsqrResult r = lsqr_solve(lin, y_obs.values, opts);
  const SimGrid& g = op.grid();
  LsqrReconstruction out{Volume::zeros(g.nx, g.ny, g.nz), std::move(r)};
  out.volume.values = out.stats.solution;
  return out;
}

}  // namespace pai
