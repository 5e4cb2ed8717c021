#pragma once

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <vector>

#include "nlslab/grid.hpp"

namespace nlslab {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Exact free-kinetic phases e^{-it(-d2/dx2)} in the mesh's natural basis:
// plane waves k_j = pi j / L on the periodic mesh (complex FFT), sine modes
// k_j = pi j / (2L) on the open dirichlet interior (DST-I, endpoints pinned
// to zero).  Owns its FFTW plans and buffers; one instance per thread.
class KineticPhase {
 public:
  explicit KineticPhase(GridPtr grid) : grid_(std::move(grid)) {
    const auto& g = *grid_;
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    if (g.boundary == Boundary::periodic) {
      buf_c_ = fftw_alloc_complex(g.n);
      fwd_ = fftw_plan_dft_1d(g.n, buf_c_, buf_c_, FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_1d(g.n, buf_c_, buf_c_, FFTW_BACKWARD, FFTW_ESTIMATE);
      ksq_.resize(g.n);
      for (int j = 0; j < g.n; ++j) {
        const int jj = j <= g.n / 2 ? j : j - g.n;
        const double k = M_PI * jj / g.L;
        ksq_[j] = k * k;
      }
    } else {
      m_ = g.n - 2;
      buf_r_ = fftw_alloc_real(m_);
      sine_ = fftw_plan_r2r_1d(m_, buf_r_, buf_r_, FFTW_RODFT00, FFTW_ESTIMATE);
      ksq_.resize(m_);
      for (int j = 1; j <= m_; ++j) {
        const double k = M_PI * j / (2.0 * g.L);
        ksq_[j - 1] = k * k;
      }
    }
  }

  KineticPhase(const KineticPhase&) = delete;
  KineticPhase& operator=(const KineticPhase&) = delete;

  ~KineticPhase() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
    if (sine_) fftw_destroy_plan(sine_);
    if (buf_c_) fftw_free(buf_c_);
    if (buf_r_) fftw_free(buf_r_);
  }

  const GridPtr& grid() const { return grid_; }

  // u <- e^{-i t (-d^2/dx^2)} u
  void apply(VectorXcd& u, double t) const {
    const auto& g = *grid_;
    if (g.boundary == Boundary::periodic) {
      for (int i = 0; i < g.n; ++i) {
        buf_c_[i][0] = u[i].real();
        buf_c_[i][1] = u[i].imag();
      }
      fftw_execute(fwd_);
      for (int j = 0; j < g.n; ++j) {
        const complexd ph = std::polar(1.0 / g.n, -t * ksq_[j]);
        const complexd z = complexd(buf_c_[j][0], buf_c_[j][1]) * ph;
        buf_c_[j][0] = z.real();
        buf_c_[j][1] = z.imag();
      }
      fftw_execute(bwd_);
      for (int i = 0; i < g.n; ++i) u[i] = complexd(buf_c_[i][0], buf_c_[i][1]);
    } else {
      // Two real transforms (re/im); RODFT00 applied twice scales by 2(m+1).
      std::vector<complexd> modes(m_);
      for (int part = 0; part < 2; ++part) {
        for (int i = 0; i < m_; ++i) buf_r_[i] = part == 0 ? u[i + 1].real() : u[i + 1].imag();
        fftw_execute(sine_);
        for (int j = 0; j < m_; ++j)
          modes[j] += part == 0 ? complexd(buf_r_[j], 0.0) : complexd(0.0, buf_r_[j]);
      }
      const double scale = 1.0 / (2.0 * (m_ + 1));
      for (int j = 0; j < m_; ++j) modes[j] *= std::polar(scale, -t * ksq_[j]);
      for (int part = 0; part < 2; ++part) {
        for (int j = 0; j < m_; ++j) buf_r_[j] = part == 0 ? modes[j].real() : modes[j].imag();
        fftw_execute(sine_);
        for (int i = 0; i < m_; ++i) {
          if (part == 0)
            u[i + 1] = complexd(buf_r_[i], u[i + 1].imag());
          else
            u[i + 1] = complexd(u[i + 1].real(), buf_r_[i]);
        }
      }
      u[0] = 0.0;  // sine basis: box endpoints stay pinned
      u[g.n - 1] = 0.0;
    }
  }

 private:
  GridPtr grid_;
  int m_ = 0;
  fftw_complex* buf_c_ = nullptr;
  double* buf_r_ = nullptr;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr, sine_ = nullptr;
  std::vector<double> ksq_;
};

}  // namespace nlslab
