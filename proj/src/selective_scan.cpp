#include <cmath>

#include "mambamil/errors.hpp"
#include "mambamil/ssm.hpp"

namespace mambamil {

using detail::Node;
using detail::wants_grad;

namespace {

struct ScanDims {
  std::size_t batch, len, inner, state;
};

ScanDims check_scan_shapes(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bseq,
                           const Tensor& cseq, const Tensor& d_skip) {
  if (u.rank() != 3) throw DimensionError("selective_scan: u must be [B, M, E], got " + shape_str(u.shape()));
  const ScanDims d{u.dim(0), u.dim(1), u.dim(2), a.rank() == 2 ? a.dim(1) : 0};
  auto fail = [&](const char* what, const Tensor& t) {
    throw DimensionError(std::string("selective_scan: ") + what + " has shape " + shape_str(t.shape()) +
                         " for u of shape " + shape_str(u.shape()));
  };
  if (delta.shape() != u.shape()) fail("delta", delta);
  if (a.rank() != 2 || a.dim(0) != d.inner) fail("A", a);
  if (bseq.shape() != Shape{d.batch, d.len, d.state}) fail("Bseq", bseq);
  if (cseq.shape() != Shape{d.batch, d.len, d.state}) fail("Cseq", cseq);
  if (d_skip.defined() && d_skip.shape() != Shape{d.inner}) fail("D", d_skip);
  for (double v : delta.data()) {
    // NaN is let through so it surfaces as a non-finite loss.
    if (v <= 0.0) throw ContractError("selective_scan: delta must be strictly positive");
  }
  return d;
}

}  // namespace

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bseq, const Tensor& cseq,
                      const Tensor& d_skip) {
  const ScanDims dims = check_scan_shapes(u, delta, a, bseq, cseq, d_skip);
  const auto [nb, nm, ne, nn] = dims;
  auto ud = u.data();
  auto dd = delta.data();
  auto ad = a.data();
  auto bd = bseq.data();
  auto cd = cseq.data();

  const bool recording = active_tape() != nullptr &&
                         (u.requires_grad() || delta.requires_grad() || a.requires_grad() || bseq.requires_grad() ||
                          cseq.requires_grad() || d_skip.requires_grad());
  // States h_t for every (b, t, e, n) are kept only when a backward pass will need them.
  std::vector<double> states(recording ? nb * nm * ne * nn : 0);
  std::vector<double> decays(recording ? nb * nm * ne * nn : 0);
  std::vector<double> y(nb * nm * ne, 0.0);
  // Time is the outer loop so B and C stream through once; h holds every channel's state.
  std::vector<double> h(ne * nn);
  for (std::size_t b = 0; b < nb; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t t = 0; t < nm; ++t) {
      const double* bt = bd.data() + (b * nm + t) * nn;
      const double* ct = cd.data() + (b * nm + t) * nn;
      for (std::size_t e = 0; e < ne; ++e) {
        const std::size_t bte = (b * nm + t) * ne + e;
        const double dt = dd[bte];
        const double du = dt * ud[bte];
        const double* ae = ad.data() + e * nn;
        double* he = h.data() + e * nn;
        double acc = 0.0;
        for (std::size_t n = 0; n < nn; ++n) {
          const double decay = std::exp(dt * ae[n]);
          he[n] = decay * he[n] + du * bt[n];
          acc += ct[n] * he[n];
          if (recording) decays[bte * nn + n] = decay;
        }
        if (recording) std::copy(he, he + nn, states.begin() + static_cast<std::ptrdiff_t>(bte * nn));
        if (d_skip.defined()) acc += d_skip.data()[e] * ud[bte];
        y[bte] = acc;
      }
    }
  }

  return detail::make_result(u.shape(), std::move(y), {u, delta, a, bseq, cseq, d_skip},
                             [dims, states = std::move(states), decays = std::move(decays)](Node& self) {
    const auto [nb, nm, ne, nn] = dims;
    const auto& un = self.inputs[0];
    const auto& dn = self.inputs[1];
    const auto& an = self.inputs[2];
    const auto& bn = self.inputs[3];
    const auto& cn = self.inputs[4];
    const auto& skn = self.inputs[5];
    std::vector<double>* gu = wants_grad(un) ? &un->ensure_grad() : nullptr;
    std::vector<double>* gd = wants_grad(dn) ? &dn->ensure_grad() : nullptr;
    std::vector<double>* ga = wants_grad(an) ? &an->ensure_grad() : nullptr;
    std::vector<double>* gb = wants_grad(bn) ? &bn->ensure_grad() : nullptr;
    std::vector<double>* gc = wants_grad(cn) ? &cn->ensure_grad() : nullptr;
    std::vector<double>* gs = wants_grad(skn) ? &skn->ensure_grad() : nullptr;
    const auto& gy = self.grad;
    const auto& ud = un->data;
    const auto& dd = dn->data;
    const auto& ad = an->data;
    const auto& bd = bn->data;
    const auto& cd = cn->data;

    // Adjoint of the state: gh_t = C_t gy_t + a_{t+1} gh_{t+1}.
    std::vector<double> gh(nn);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t e = 0; e < ne; ++e) {
        std::fill(gh.begin(), gh.end(), 0.0);
        const double* ae = ad.data() + e * nn;
        for (std::size_t t = nm; t-- > 0;) {
          const std::size_t bte = (b * nm + t) * ne + e;
          const double g = gy[bte];
          const double dt = dd[bte];
          const double uv = ud[bte];
          const double* bt = bd.data() + (b * nm + t) * nn;
          const double* ct = cd.data() + (b * nm + t) * nn;
          const double* ht = states.data() + bte * nn;
          const double* dk = decays.data() + bte * nn;
          const double* hprev = t > 0 ? states.data() + ((b * nm + t - 1) * ne + e) * nn : nullptr;
          if (skn) {
            if (gs) (*gs)[e] += g * uv;
            if (gu) (*gu)[bte] += g * skn->data[e];
          }
          double du_acc = 0.0, dd_acc = 0.0;
          for (std::size_t n = 0; n < nn; ++n) {
            const std::size_t btn = (b * nm + t) * nn + n;
            if (gc) (*gc)[btn] += g * ht[n];
            gh[n] += ct[n] * g;
            const double decay = dk[n];
            const double hp = hprev ? hprev[n] : 0.0;
            du_acc += gh[n] * dt * bt[n];
            dd_acc += gh[n] * (ae[n] * decay * hp + bt[n] * uv);
            if (ga) (*ga)[e * nn + n] += gh[n] * dt * decay * hp;
            if (gb) (*gb)[btn] += gh[n] * dt * uv;
            gh[n] *= decay;  // carry to t-1
          }
          if (gu) (*gu)[bte] += du_acc;
          if (gd) (*gd)[bte] += dd_acc;
        }
      }
    }
  });
}

}  // namespace mambamil
