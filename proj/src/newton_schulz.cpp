#include "hpdcnn/newton_schulz.hpp"

#include <algorithm>
#include <cmath>

#include "hpdcnn/errors.hpp"

namespace hpdcnn {

namespace {

double real_trace(const ComplexMatrix& m) { return trace(m).real(); }

double ns_gain(double p) { return 0.25 * p * (3.0 - p) * (3.0 - p); }

}  // namespace

namespace {

// Schedule and its forward-mode derivative with respect to the ratio.
void schedule_impl(double upper, double ratio, int iters, std::vector<double>* beta,
                   std::vector<double>* dbeta) {
  const std::size_t count = static_cast<std::size_t>(std::max(iters, 0));
  if (beta) beta->assign(count, 0.0);
  if (dbeta) dbeta->assign(count, 0.0);
  double u = upper;
  double l = upper / std::max(ratio, 1.0);
  double dl = ratio > 1.0 ? -upper / (ratio * ratio) : 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    // 3 (1 - q) / (1 - q^3) with q = sqrt(l / u)
    const double q = std::sqrt(std::min(l / u, 1.0));
    const double dq = q > 0.0 && l < u ? dl / (2.0 * u * q) : 0.0;
    const double den = 1.0 + q + q * q;
    const double b = 3.0 / (den * u);
    const double db = -3.0 * (1.0 + 2.0 * q) * dq / (den * den * u);
    const double p = b * l;
    const double dp = db * l + b * dl;
    l = ns_gain(p);
    dl = 0.25 * (3.0 - p) * (3.0 - 3.0 * p) * dp;
    u = 1.0;
    if (beta) (*beta)[k] = b;
    if (dbeta) (*dbeta)[k] = db;
  }
}

}  // namespace

std::vector<double> ns_schedule(double upper, double ratio, int iters) {
  std::vector<double> beta;
  schedule_impl(upper, ratio, iters, &beta, nullptr);
  return beta;
}

std::vector<double> ns_schedule_dratio(double upper, double ratio, int iters) {
  std::vector<double> dbeta;
  schedule_impl(upper, ratio, iters, nullptr, &dbeta);
  return dbeta;
}

std::pair<ComplexMatrix, ComplexMatrix> sqrt_ns_raw(const ComplexMatrix& c,
                                                    const NsOptions& opts, SqrtNsTape* tape) {
  if (!c.is_square() || c.empty()) throw Error(ErrorCode::NotSquare, "sqrt_ns");
  const std::size_t n = c.rows();

  ComplexMatrix creg = c;
  auto inv = hpd_inverse(c);
  bool guarded = false;
  if (opts.condition_guard) {
    if (!inv) throw Error(ErrorCode::NotPositiveDefinite, "sqrt_ns input");
    if (frobenius_norm(c) * frobenius_norm(*inv) > kConditionGuard) {
      creg.add_identity(kGuardRelativeEps * real_trace(c) / static_cast<double>(n));
      inv = hpd_inverse(creg);
      guarded = true;
    }
  }
  const double s = real_trace(creg);
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw Error(ErrorCode::NotPositiveDefinite, "sqrt_ns: non-positive trace");
  }
  const std::optional<double> kappa =
      inv ? std::optional<double>(frobenius_norm(creg) * frobenius_norm(*inv)) : std::nullopt;
  const bool design_free = kappa && *kappa < opts.max_design_condition;
  const double design = design_free ? *kappa : opts.max_design_condition;
  const auto beta = ns_schedule(frobenius_norm(creg) / s, design, opts.iters);

  ComplexMatrix x = creg * (1.0 / s);
  ComplexMatrix z = ComplexMatrix::identity(n);
  if (tape) {
    tape->s = s;
    tape->guarded = guarded;
    tape->beta = beta;
    tape->states.clear();
    tape->t.clear();
    tape->reg_input = creg;
    tape->design = design;
    tape->design_free = design_free;
    tape->reg_inverse = design_free ? *inv : ComplexMatrix();
  }
  for (int k = 0; k < opts.iters; ++k) {
    const double b = beta[static_cast<std::size_t>(k)];
    const double alpha = std::sqrt(b);
    ComplexMatrix t = (z * x) * (-0.5 * b);
    t.add_identity(1.5);
    ComplexMatrix xn = (x * t) * alpha;
    ComplexMatrix zn = (t * z) * alpha;
    if (tape) {
      tape->states.push_back({std::move(x), std::move(z), s});
      tape->t.push_back(std::move(t));
    }
    x = std::move(xn);
    z = std::move(zn);
  }
  ComplexMatrix y = hermitian_part(x * std::sqrt(s));
  ComplexMatrix zinv = hermitian_part(z * (1.0 / std::sqrt(s)));
  if (tape) tape->states.push_back({std::move(x), std::move(z), s});

  if (opts.check_residual) {
    const double ref = frobenius_norm(c);
    const double res = frobenius_norm(y * y - c);
    if (!(res <= kNsResidualLimit * ref)) {
      throw Error(ErrorCode::NotConverged,
                  "relative residual " + std::to_string(res / ref) + " after " +
                      std::to_string(opts.iters) + " iterations");
    }
  }
  return {std::move(y), std::move(zinv)};
}

SqrtNsResult sqrt_ns(const HpdMatrix& c, int iters) {
  NsOptions opts;
  opts.iters = iters;
  auto [y, zinv] = sqrt_ns_raw(c.mat(), opts);
  return {HpdMatrix::adopt(std::move(y)), HpdMatrix::adopt(std::move(zinv))};
}

ComplexMatrix sqrt_ns_backward(const SqrtNsTape& tape, const ComplexMatrix& grad_y,
                               const ComplexMatrix* grad_zinv) {
  if (tape.states.size() != tape.beta.size() + 1 || tape.t.size() != tape.beta.size()) {
    throw Error(ErrorCode::TapeMismatch, "sqrt_ns tape");
  }
  const double s = tape.s;
  const double rs = std::sqrt(s);
  const NsState& last = tape.states.back();
  const std::size_t n = last.x.rows();
  if (grad_y.rows() != n || grad_y.cols() != n) {
    throw Error(ErrorCode::TapeMismatch, "gradient shape does not match tape");
  }

  const ComplexMatrix gy = hermitian_part(grad_y);
  ComplexMatrix gx = gy * rs;
  double gs = inner(gy, last.x) / (2.0 * rs);
  ComplexMatrix gz(n, n);
  if (grad_zinv) {
    const ComplexMatrix gzi = hermitian_part(*grad_zinv);
    gz = gzi * (1.0 / rs);
    gs -= inner(gzi, last.z) / (2.0 * s * rs);
  }

  std::vector<double> gbeta(tape.beta.size(), 0.0);
  for (std::size_t k = tape.beta.size(); k-- > 0;) {
    const double b = tape.beta[k];
    const double alpha = std::sqrt(b);
    const ComplexMatrix& x = tape.states[k].x;
    const ComplexMatrix& z = tape.states[k].z;
    const ComplexMatrix& t = tape.t[k];
    const ComplexMatrix gt = (adjoint(x) * gx + gz * adjoint(z)) * alpha;
    gbeta[k] = (inner(gx, x * t) + inner(gz, t * z)) / (2.0 * alpha) - 0.5 * inner(gt, z * x);
    ComplexMatrix gx_prev = (gx * adjoint(t)) * alpha - (adjoint(z) * gt) * (0.5 * b);
    ComplexMatrix gz_prev = (adjoint(t) * gz) * alpha - (gt * adjoint(x)) * (0.5 * b);
    gx = std::move(gx_prev);
    gz = std::move(gz_prev);
  }

  // X_0 = c' / s, s = Re tr(c'), c' = c + guard eps I. beta_0 = k(ratio) / u
  // with u = ||c'||_F / s; every beta_k moves with the design ratio, which
  // tracks kappa = ||c'||_F ||c'^-1||_F below the cap.
  const ComplexMatrix& creg = tape.reg_input;
  ComplexMatrix gc = gx * (1.0 / s);
  gs -= inner(gx, creg) / (s * s);
  if (!tape.beta.empty()) {
    const double cn = frobenius_norm(creg);
    const double u = cn / s;
    const double gu = -gbeta[0] * tape.beta[0] / u;
    gc += creg * (gu / (cn * s));
    gs -= gu * u / s;
    if (tape.design_free) {
      const auto db = ns_schedule_dratio(u, tape.design, static_cast<int>(tape.beta.size()));
      double gk = 0.0;
      for (std::size_t k = 0; k < db.size(); ++k) gk += gbeta[k] * db[k];
      const ComplexMatrix& a = tape.reg_inverse;
      const double an = frobenius_norm(a);
      gc += creg * (gk * an / cn) - (a * a * a) * (gk * cn / an);
    }
  }
  gc.add_identity(gs);
  if (tape.guarded) {
    gc.add_identity(kGuardRelativeEps * real_trace(gc) / static_cast<double>(n));
  }
  return gc;
}

ComplexMatrix log_ns(const HpdMatrix& c, int depth, int series_terms, LogNsTape* tape) {
  const std::size_t n = c.order();
  if (n == 0) throw Error(ErrorCode::NotSquare, "log_ns of empty matrix");
  if (depth < 0 || series_terms < 1) throw Error(ErrorCode::BadDims, "log_ns parameters");
  const double s0 = real_trace(c.mat()) / static_cast<double>(n);
  if (!(s0 > 0.0)) throw Error(ErrorCode::NotPositiveDefinite, "log_ns: non-positive trace");

  ComplexMatrix r = c.mat() * (1.0 / s0);
  if (tape) {
    tape->s0 = s0;
    tape->depth = depth;
    tape->r0 = r;
    tape->roots.assign(static_cast<std::size_t>(depth), SqrtNsTape{});
    tape->horner.clear();
  }
  const NsOptions opts;
  for (int d = 0; d < depth; ++d) {
    r = sqrt_ns_raw(r, opts, tape ? &tape->roots[static_cast<std::size_t>(d)] : nullptr).first;
  }
  ComplexMatrix e = r;
  e.add_identity(-1.0);
  const double en = frobenius_norm(e);
  if (!(en < 1.0)) {
    throw Error(ErrorCode::SeriesDiverged, "||R - I||_F = " + std::to_string(en));
  }

  // log(I + E) = E (a_1 I + E (a_2 I + ... + E a_m I)), a_k = (-1)^{k+1} / k.
  auto coeff = [](int k) { return (k % 2 == 1 ? 1.0 : -1.0) / static_cast<double>(k); };
  ComplexMatrix p = ComplexMatrix::identity(n) * coeff(series_terms);
  if (tape) tape->horner.push_back(p);
  for (int k = series_terms - 1; k >= 1; --k) {
    p = e * p;
    p.add_identity(coeff(k));
    if (tape) tape->horner.push_back(p);
  }
  ComplexMatrix out = hermitian_part((e * p) * std::exp2(depth));
  out.add_identity(std::log(s0));
  if (tape) tape->e = std::move(e);
  return out;
}

ComplexMatrix log_ns_backward(const LogNsTape& tape, const ComplexMatrix& grad) {
  if (tape.roots.size() != static_cast<std::size_t>(tape.depth) || tape.horner.empty()) {
    throw Error(ErrorCode::TapeMismatch, "log_ns tape");
  }
  const ComplexMatrix& e = tape.e;
  const std::size_t n = e.rows();
  const ComplexMatrix g = hermitian_part(grad);
  double gs0 = real_trace(g) / tape.s0;

  const ComplexMatrix gl = g * std::exp2(tape.depth);
  const ComplexMatrix eh = adjoint(e);
  // horner = [P_m, P_{m-1}, ..., P_1]; L = E P_1; P_k = a_k I + E P_{k+1}.
  const std::size_t m = tape.horner.size();
  ComplexMatrix ge = gl * adjoint(tape.horner[m - 1]);
  ComplexMatrix gp = eh * gl;
  for (std::size_t idx = m - 1; idx-- > 0;) {
    ge += gp * adjoint(tape.horner[idx]);
    gp = eh * gp;
  }

  ComplexMatrix gr = std::move(ge);
  for (std::size_t d = tape.roots.size(); d-- > 0;) {
    gr = sqrt_ns_backward(tape.roots[d], gr);
  }
  // R_0 = c / s0, s0 = Re tr(c) / n.
  ComplexMatrix gc = gr * (1.0 / tape.s0);
  gs0 -= inner(gr, tape.r0) / tape.s0;
  gc.add_identity(gs0 / static_cast<double>(n));
  return gc;
}

HpdMatrix clamp_ns(const HpdMatrix& c, double tau, ClampNsTape* tape) {
  if (!(tau > 0.0)) throw Error(ErrorCode::DomainError, "clamp threshold must be positive");
  const std::size_t n = c.order();
  ComplexMatrix m = c.mat();
  m.add_identity(-tau);
  if (cholesky(m)) {
    if (tape) {
      tape->regime = ClampRegime::Inactive;
      tape->m = std::move(m);
    }
    return c;
  }
  if (cholesky(m * -1.0)) {
    if (tape) {
      tape->regime = ClampRegime::Saturated;
      tape->m = std::move(m);
    }
    return HpdMatrix::adopt(ComplexMatrix::identity(n) * tau);
  }
  NsOptions opts;
  opts.condition_guard = false;
  const ComplexMatrix q = hermitian_part(m * m);
  ComplexMatrix z1 = sqrt_ns_raw(q, opts, tape ? &tape->first : nullptr).second;
  ComplexMatrix sign1 = hermitian_part(m * z1);
  const ComplexMatrix w = hermitian_part(sign1 * sign1);
  ComplexMatrix z2 = sqrt_ns_raw(w, opts, tape ? &tape->second : nullptr).second;
  ComplexMatrix out = c.mat() + (m * sign1) * z2;
  out.add_identity(tau);
  out *= 0.5;
  if (tape) {
    tape->regime = ClampRegime::Mixed;
    tape->m = std::move(m);
    tape->z1 = std::move(z1);
    tape->sign1 = std::move(sign1);
    tape->z2 = std::move(z2);
  }
  return HpdMatrix::adopt(std::move(out));
}

ComplexMatrix clamp_ns_backward(const ClampNsTape& tape, const ComplexMatrix& grad) {
  const std::size_t n = tape.m.rows();
  if (grad.rows() != n || grad.cols() != n) throw Error(ErrorCode::TapeMismatch, "clamp_ns");
  const ComplexMatrix g = hermitian_part(grad);
  switch (tape.regime) {
    case ClampRegime::Inactive:
      return g;
    case ClampRegime::Saturated:
      return ComplexMatrix(n, n);
    case ClampRegime::Mixed:
      break;
  }
  const ComplexMatrix& m = tape.m;
  const ComplexMatrix& s1 = tape.sign1;
  const ComplexMatrix mh = adjoint(m);
  const ComplexMatrix zero(n, n);

  // |M| = (M S) Z2
  const ComplexMatrix gabs = g * 0.5;
  const ComplexMatrix gp = gabs * adjoint(tape.z2);
  const ComplexMatrix gz2 = adjoint(m * s1) * gabs;
  ComplexMatrix gm = gp * adjoint(s1);
  ComplexMatrix gs = mh * gp;

  // Z2 ~ (S S)^{-1/2}
  const ComplexMatrix gw = hermitian_part(sqrt_ns_backward(tape.second, zero, &gz2));
  gs += gw * adjoint(s1) + adjoint(s1) * gw;

  // S = M Z1
  const ComplexMatrix gsh = hermitian_part(gs);
  gm += gsh * adjoint(tape.z1);
  const ComplexMatrix gz1 = mh * gsh;

  // Z1 ~ (M M)^{-1/2}
  const ComplexMatrix gq = hermitian_part(sqrt_ns_backward(tape.first, zero, &gz1));
  gm += gq * mh + mh * gq;

  ComplexMatrix gc = g * 0.5;
  gc += gm;
  return gc;
}

}  // namespace hpdcnn
