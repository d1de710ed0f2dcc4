#include <algorithm>
#include <cmath>

#include "hpdcnn/errors.hpp"
#include "hpdcnn/newton_schulz.hpp"

namespace hpdcnn {

namespace {

// Lanes processed together; keeps the working set of one chunk in L1/L2.
constexpr std::size_t kChunk = 32;

// n x n matrices for a batch of lanes; entry (i, j) of lane b lives at
// (i * n + j) * lanes + b.
struct Soa {
  std::size_t n = 0, lanes = 0;
  std::vector<double> re, im;

  Soa() = default;
  Soa(std::size_t n_, std::size_t lanes_)
      : n(n_), lanes(lanes_), re(n_ * n_ * lanes_, 0.0), im(n_ * n_ * lanes_, 0.0) {}

  double* r(std::size_t i, std::size_t j) { return re.data() + (i * n + j) * lanes; }
  double* c(std::size_t i, std::size_t j) { return im.data() + (i * n + j) * lanes; }
  const double* r(std::size_t i, std::size_t j) const { return re.data() + (i * n + j) * lanes; }
  const double* c(std::size_t i, std::size_t j) const { return im.data() + (i * n + j) * lanes; }

  void load(std::size_t b, const ComplexMatrix& m) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        r(i, j)[b] = m.re(i, j);
        c(i, j)[b] = m.im(i, j);
      }
    }
  }

  ComplexMatrix lane(std::size_t b) const {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        m.re(i, j) = r(i, j)[b];
        m.im(i, j) = c(i, j)[b];
      }
    }
    return m;
  }
};

template <std::size_t N, std::size_t L>
void mul_fixed(const double* __restrict ar, const double* __restrict ai, const double* __restrict br,
               const double* __restrict bi, double* __restrict zr, double* __restrict zi,
               const double* __restrict scale, double diag) {
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      double sr[L], si[L];
      for (std::size_t l = 0; l < L; ++l) {
        sr[l] = 0.0;
        si[l] = 0.0;
      }
      for (std::size_t p = 0; p < N; ++p) {
        const double* xr = ar + (i * N + p) * L;
        const double* xi = ai + (i * N + p) * L;
        const double* yr = br + (p * N + j) * L;
        const double* yi = bi + (p * N + j) * L;
        for (std::size_t l = 0; l < L; ++l) {
          sr[l] += xr[l] * yr[l] - xi[l] * yi[l];
          si[l] += xr[l] * yi[l] + xi[l] * yr[l];
        }
      }
      if (scale) {
        for (std::size_t l = 0; l < L; ++l) {
          sr[l] *= scale[l];
          si[l] *= scale[l];
        }
      }
      if (i == j && diag != 0.0) {
        for (std::size_t l = 0; l < L; ++l) sr[l] += diag;
      }
      for (std::size_t l = 0; l < L; ++l) {
        zr[(i * N + j) * L + l] = sr[l];
        zi[(i * N + j) * L + l] = si[l];
      }
    }
  }
}

void scale_lanes(Soa& m, const double* s);
void add_identity_lanes(Soa& m, double s);

// out = scale[lane] * (a * b) + diag I, lane-wise.
void mul(const Soa& a, const Soa& b, Soa& out, const double* scale = nullptr, double diag = 0.0) {
  const std::size_t n = a.n, lanes = a.lanes;
  if (n == 3 && lanes == kChunk) {
    mul_fixed<3, kChunk>(a.re.data(), a.im.data(), b.re.data(), b.im.data(), out.re.data(),
                         out.im.data(), scale, diag);
    return;
  }
  std::fill(out.re.begin(), out.re.end(), 0.0);
  std::fill(out.im.begin(), out.im.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < n; ++p) {
      const double* __restrict xr = a.r(i, p);
      const double* __restrict xi = a.c(i, p);
      for (std::size_t j = 0; j < n; ++j) {
        const double* __restrict yr = b.r(p, j);
        const double* __restrict yi = b.c(p, j);
        double* __restrict zr = out.r(i, j);
        double* __restrict zi = out.c(i, j);
        for (std::size_t l = 0; l < lanes; ++l) {
          zr[l] += xr[l] * yr[l] - xi[l] * yi[l];
          zi[l] += xr[l] * yi[l] + xi[l] * yr[l];
        }
      }
    }
  }
  if (scale) scale_lanes(out, scale);
  if (diag != 0.0) add_identity_lanes(out, diag);
}

// m *= s[lane]
void scale_lanes(Soa& m, const double* s) {
  const std::size_t lanes = m.lanes;
  for (std::size_t k = 0; k < m.n * m.n; ++k) {
    double* __restrict zr = m.re.data() + k * lanes;
    double* __restrict zi = m.im.data() + k * lanes;
    for (std::size_t l = 0; l < lanes; ++l) {
      zr[l] *= s[l];
      zi[l] *= s[l];
    }
  }
}

// m += s[lane] I
void add_identity_lanes(Soa& m, const double* s) {
  for (std::size_t i = 0; i < m.n; ++i) {
    double* d = m.r(i, i);
    for (std::size_t l = 0; l < m.lanes; ++l) d[l] += s[l];
  }
}

void add_identity_lanes(Soa& m, double s) {
  for (std::size_t i = 0; i < m.n; ++i) {
    double* d = m.r(i, i);
    for (std::size_t l = 0; l < m.lanes; ++l) d[l] += s;
  }
}

// (m + m^H) / 2 with the same arithmetic as hermitian_part.
void hermitian_lanes(Soa& m) {
  for (std::size_t i = 0; i < m.n; ++i) {
    double* di = m.c(i, i);
    for (std::size_t l = 0; l < m.lanes; ++l) di[l] = 0.0;
    for (std::size_t j = i + 1; j < m.n; ++j) {
      double* ar = m.r(i, j);
      double* ai = m.c(i, j);
      double* br = m.r(j, i);
      double* bi = m.c(j, i);
      for (std::size_t l = 0; l < m.lanes; ++l) {
        const double re = 0.5 * (ar[l] + br[l]);
        const double im = 0.5 * (ai[l] - bi[l]);
        ar[l] = re;
        ai[l] = im;
        br[l] = re;
        bi[l] = -im;
      }
    }
  }
}

void trace_lanes(const Soa& m, double* out) {
  std::fill(out, out + m.lanes, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    const double* d = m.r(i, i);
    for (std::size_t l = 0; l < m.lanes; ++l) out[l] += d[l];
  }
}

void frobenius_lanes(const Soa& m, double* out) {
  std::fill(out, out + m.lanes, 0.0);
  for (std::size_t k = 0; k < m.n * m.n; ++k) {
    const double* xr = m.re.data() + k * m.lanes;
    const double* xi = m.im.data() + k * m.lanes;
    for (std::size_t l = 0; l < m.lanes; ++l) out[l] += xr[l] * xr[l] + xi[l] * xi[l];
  }
  for (std::size_t l = 0; l < m.lanes; ++l) out[l] = std::sqrt(out[l]);
}

// Lane-wise inverse of a Hermitian matrix through its Cholesky factor,
// following the arithmetic of hpd_inverse. ok[lane] is cleared where the
// factorization breaks down.
void hpd_inverse_lanes(const Soa& a, Soa& inv, std::vector<unsigned char>& ok) {
  const std::size_t n = a.n, lanes = a.lanes;
  Soa l(n, lanes), li(n, lanes);
  ok.assign(lanes, 1);
  for (std::size_t j = 0; j < n; ++j) {
    double* ljr = l.r(j, j);
    {
      const double* ajj = a.r(j, j);
      for (std::size_t b = 0; b < lanes; ++b) {
        double d = ajj[b];
        for (std::size_t k = 0; k < j; ++k) {
          const double xr = l.r(j, k)[b], xi = l.c(j, k)[b];
          d -= xr * xr + xi * xi;
        }
        if (!(d > 0.0) || !std::isfinite(d)) {
          ok[b] = 0;
          d = 1.0;
        }
        ljr[b] = std::sqrt(d);
      }
    }
    for (std::size_t i = j + 1; i < n; ++i) {
      double* lr = l.r(i, j);
      double* lc = l.c(i, j);
      const double* ar = a.r(i, j);
      const double* ac = a.c(i, j);
      for (std::size_t b = 0; b < lanes; ++b) {
        double sr = ar[b], si = ac[b];
        for (std::size_t k = 0; k < j; ++k) {
          // l(i,k) * conj(l(j,k))
          const double pr = l.r(i, k)[b], pi = l.c(i, k)[b];
          const double qr = l.r(j, k)[b], qi = l.c(j, k)[b];
          sr -= pr * qr + pi * qi;
          si -= pi * qr - pr * qi;
        }
        lr[b] = sr / ljr[b];
        lc[b] = si / ljr[b];
      }
    }
  }
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t i = col; i < n; ++i) {
      double* outr = li.r(i, col);
      double* outc = li.c(i, col);
      const double* dii = l.r(i, i);
      for (std::size_t b = 0; b < lanes; ++b) {
        double sr = i == col ? 1.0 : 0.0, si = 0.0;
        for (std::size_t k = col; k < i; ++k) {
          const double pr = l.r(i, k)[b], pi = l.c(i, k)[b];
          const double qr = li.r(k, col)[b], qi = li.c(k, col)[b];
          sr -= pr * qr - pi * qi;
          si -= pr * qi + pi * qr;
        }
        outr[b] = sr / dii[b];
        outc[b] = si / dii[b];
      }
    }
  }
  // inv = li^H li
  std::fill(inv.re.begin(), inv.re.end(), 0.0);
  std::fill(inv.im.begin(), inv.im.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < n; ++p) {
      const double* xr = li.r(p, i);
      const double* xi = li.c(p, i);
      for (std::size_t j = 0; j < n; ++j) {
        const double* yr = li.r(p, j);
        const double* yi = li.c(p, j);
        double* zr = inv.r(i, j);
        double* zi = inv.c(i, j);
        for (std::size_t b = 0; b < lanes; ++b) {
          zr[b] += xr[b] * yr[b] + xi[b] * yi[b];
          zi[b] += xr[b] * yi[b] - xi[b] * yr[b];
        }
      }
    }
  }
  hermitian_lanes(inv);
}

struct SqrtLanes {
  Soa y, zinv;
};

// Lane-wise analogue of sqrt_ns_raw without tapes.
SqrtLanes sqrt_lanes(const Soa& c, const NsOptions& opts) {
  const std::size_t n = c.n, lanes = c.lanes;
  const auto iters = static_cast<std::size_t>(std::max(opts.iters, 0));
  Soa creg = c, inv(n, lanes);
  std::vector<unsigned char> ok;
  hpd_inverse_lanes(creg, inv, ok);
  std::vector<double> cn(lanes), in(lanes), s(lanes), tmp(lanes);
  frobenius_lanes(creg, cn.data());
  frobenius_lanes(inv, in.data());
  if (opts.condition_guard) {
    bool any = false;
    trace_lanes(c, s.data());
    for (std::size_t b = 0; b < lanes; ++b) {
      if (!ok[b]) throw Error(ErrorCode::NotPositiveDefinite, "sqrt_ns input");
      tmp[b] = 0.0;
      if (cn[b] * in[b] > kConditionGuard) {
        tmp[b] = kGuardRelativeEps * s[b] / static_cast<double>(n);
        any = true;
      }
    }
    if (any) {
      add_identity_lanes(creg, tmp.data());
      hpd_inverse_lanes(creg, inv, ok);
      frobenius_lanes(creg, cn.data());
      frobenius_lanes(inv, in.data());
    }
  }
  trace_lanes(creg, s.data());
  std::vector<double> u(lanes), l(lanes), beta(iters * lanes);
  for (std::size_t b = 0; b < lanes; ++b) {
    if (!(s[b] > 0.0) || !std::isfinite(s[b])) {
      throw Error(ErrorCode::NotPositiveDefinite, "sqrt_ns: non-positive trace");
    }
    const double kappa = cn[b] * in[b];
    const double design = ok[b] && kappa < opts.max_design_condition ? kappa
                                                                     : opts.max_design_condition;
    u[b] = cn[b] / s[b];
    l[b] = u[b] / std::max(design, 1.0);
  }
  // Same per-step arithmetic as ns_schedule.
  for (std::size_t k = 0; k < iters; ++k) {
    double* bk = beta.data() + k * lanes;
    for (std::size_t b = 0; b < lanes; ++b) {
      const double q = std::sqrt(std::min(l[b] / u[b], 1.0));
      const double den = 1.0 + q + q * q;
      bk[b] = 3.0 / (den * u[b]);
      const double p = bk[b] * l[b];
      l[b] = 0.25 * p * (3.0 - p) * (3.0 - p);
      u[b] = 1.0;
    }
  }

  Soa x = creg;
  for (std::size_t b = 0; b < lanes; ++b) tmp[b] = 1.0 / s[b];
  scale_lanes(x, tmp.data());
  Soa z(n, lanes), t(n, lanes), xn(n, lanes), zn(n, lanes);
  add_identity_lanes(z, 1.0);
  std::vector<double> half_b(lanes), alpha(lanes);
  for (std::size_t k = 0; k < iters; ++k) {
    const double* bk = beta.data() + k * lanes;
    for (std::size_t b = 0; b < lanes; ++b) {
      half_b[b] = -0.5 * bk[b];
      alpha[b] = std::sqrt(bk[b]);
    }
    mul(z, x, t, half_b.data(), 1.5);
    mul(x, t, xn, alpha.data());
    mul(t, z, zn, alpha.data());
    std::swap(x, xn);
    std::swap(z, zn);
  }
  SqrtLanes out{std::move(x), std::move(z)};
  for (std::size_t b = 0; b < lanes; ++b) tmp[b] = std::sqrt(s[b]);
  scale_lanes(out.y, tmp.data());
  hermitian_lanes(out.y);
  for (std::size_t b = 0; b < lanes; ++b) tmp[b] = 1.0 / std::sqrt(s[b]);
  scale_lanes(out.zinv, tmp.data());
  hermitian_lanes(out.zinv);

  if (opts.check_residual) {
    Soa yy(n, lanes);
    mul(out.y, out.y, yy);
    for (std::size_t k = 0; k < n * n; ++k) {
      double* zr = yy.re.data() + k * lanes;
      double* zi = yy.im.data() + k * lanes;
      const double* cr = c.re.data() + k * lanes;
      const double* ci = c.im.data() + k * lanes;
      for (std::size_t b = 0; b < lanes; ++b) {
        zr[b] -= cr[b];
        zi[b] -= ci[b];
      }
    }
    std::vector<double> res(lanes), ref(lanes);
    frobenius_lanes(yy, res.data());
    frobenius_lanes(c, ref.data());
    for (std::size_t b = 0; b < lanes; ++b) {
      if (!(res[b] <= kNsResidualLimit * ref[b])) {
        throw Error(ErrorCode::NotConverged, "relative residual " + std::to_string(res[b] / ref[b]));
      }
    }
  }
  return out;
}

std::size_t common_order(std::span<const HpdMatrix> batch) {
  if (batch.empty()) return 0;
  const std::size_t n = batch.front().order();
  for (const auto& m : batch) {
    if (m.order() != n) throw Error(ErrorCode::DimensionMismatch, "mixed orders in batch");
  }
  if (n == 0) throw Error(ErrorCode::NotSquare, "empty matrix in batch");
  return n;
}

template <class F>
void for_chunks(std::size_t total, F&& f) {
  for (std::size_t start = 0; start < total; start += kChunk) f(start, std::min(kChunk, total - start));
}

Soa load_chunk(std::span<const HpdMatrix> batch, std::size_t start, std::size_t lanes) {
  Soa c(batch[start].order(), lanes);
  for (std::size_t b = 0; b < lanes; ++b) c.load(b, batch[start + b].mat());
  return c;
}

}  // namespace

std::vector<ComplexMatrix> sqrt_ns_batch(std::span<const HpdMatrix> batch, int iters) {
  common_order(batch);
  NsOptions opts;
  opts.iters = iters;
  std::vector<ComplexMatrix> out(batch.size());
  for_chunks(batch.size(), [&](std::size_t start, std::size_t lanes) {
    const SqrtLanes r = sqrt_lanes(load_chunk(batch, start, lanes), opts);
    for (std::size_t b = 0; b < lanes; ++b) out[start + b] = r.y.lane(b);
  });
  return out;
}

std::vector<ComplexMatrix> log_ns_batch(std::span<const HpdMatrix> batch, int depth,
                                        int series_terms) {
  const std::size_t n = common_order(batch);
  if (depth < 0 || series_terms < 1) throw Error(ErrorCode::BadDims, "log_ns parameters");
  std::vector<ComplexMatrix> out(batch.size());
  const NsOptions opts;
  auto coeff = [](int k) { return (k % 2 == 1 ? 1.0 : -1.0) / static_cast<double>(k); };
  for_chunks(batch.size(), [&](std::size_t start, std::size_t lanes) {
    Soa r = load_chunk(batch, start, lanes);
    std::vector<double> s0(lanes), inv(lanes);
    trace_lanes(r, s0.data());
    for (std::size_t b = 0; b < lanes; ++b) {
      s0[b] /= static_cast<double>(n);
      if (!(s0[b] > 0.0)) throw Error(ErrorCode::NotPositiveDefinite, "log_ns: non-positive trace");
      inv[b] = 1.0 / s0[b];
    }
    scale_lanes(r, inv.data());
    for (int d = 0; d < depth; ++d) r = sqrt_lanes(r, opts).y;

    Soa& e = r;
    add_identity_lanes(e, -1.0);
    std::vector<double> en(lanes);
    frobenius_lanes(e, en.data());
    for (std::size_t b = 0; b < lanes; ++b) {
      if (!(en[b] < 1.0)) {
        throw Error(ErrorCode::SeriesDiverged, "||R - I||_F = " + std::to_string(en[b]));
      }
    }
    Soa p(n, lanes), q(n, lanes);
    add_identity_lanes(p, coeff(series_terms));
    for (int k = series_terms - 1; k >= 1; --k) {
      mul(e, p, q, nullptr, coeff(k));
      std::swap(p, q);
    }
    mul(e, p, q);
    std::vector<double> scale(lanes, std::exp2(depth));
    scale_lanes(q, scale.data());
    hermitian_lanes(q);
    for (std::size_t b = 0; b < lanes; ++b) {
      ComplexMatrix m = q.lane(b);
      m.add_identity(std::log(s0[b]));
      out[start + b] = std::move(m);
    }
  });
  return out;
}

std::vector<ComplexMatrix> clamp_ns_batch(std::span<const HpdMatrix> batch,
                                          std::span<const double> tau) {
  const std::size_t n = common_order(batch);
  if (tau.size() != batch.size()) throw Error(ErrorCode::DimensionMismatch, "tau per matrix");
  std::vector<ComplexMatrix> out(batch.size());
  std::vector<std::size_t> mixed;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!(tau[b] > 0.0)) throw Error(ErrorCode::DomainError, "clamp threshold must be positive");
    ComplexMatrix m = batch[b].mat();
    m.add_identity(-tau[b]);
    if (cholesky(m)) {
      out[b] = batch[b].mat();
    } else if (cholesky(m * -1.0)) {
      out[b] = ComplexMatrix::identity(n) * tau[b];
    } else {
      mixed.push_back(b);
    }
  }
  NsOptions opts;
  opts.condition_guard = false;
  for_chunks(mixed.size(), [&](std::size_t start, std::size_t lanes) {
    Soa m(n, lanes), q(n, lanes), sgn(n, lanes), w(n, lanes), ms(n, lanes), o(n, lanes);
    std::vector<double> shift(lanes);
    for (std::size_t b = 0; b < lanes; ++b) {
      m.load(b, batch[mixed[start + b]].mat());
      shift[b] = -tau[mixed[start + b]];
    }
    add_identity_lanes(m, shift.data());
    mul(m, m, q);
    hermitian_lanes(q);
    const SqrtLanes first = sqrt_lanes(q, opts);
    mul(m, first.zinv, sgn);
    hermitian_lanes(sgn);
    mul(sgn, sgn, w);
    hermitian_lanes(w);
    const SqrtLanes second = sqrt_lanes(w, opts);
    mul(m, sgn, ms);
    mul(ms, second.zinv, o);
    for (std::size_t b = 0; b < lanes; ++b) {
      const std::size_t idx = mixed[start + b];
      ComplexMatrix r = batch[idx].mat() + o.lane(b);
      r.add_identity(tau[idx]);
      r *= 0.5;
      out[idx] = hermitian_part(r);
    }
  });
  return out;
}

}  // namespace hpdcnn
