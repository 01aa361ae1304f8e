#include "inrun/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace inrun::kernels {

namespace serial {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
      c[i * n + j] = sum;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

void ghost_pair_layer(std::size_t batch, std::size_t val_count, std::size_t d_in,
                      std::size_t d_out, const double* acts, const double* errs,
                      const double* val_acts, const double* val_errs, bool bias, double* out) {
  const double inv_v = 1.0 / static_cast<double>(val_count);
  for (std::size_t i = 0; i < batch; ++i) {
    double total = 0.0;
    for (std::size_t v = 0; v < val_count; ++v) {
      double err_corr = 0.0;
      for (std::size_t j = 0; j < d_out; ++j) err_corr += errs[i * d_out + j] * val_errs[v * d_out + j];
      double act_corr = bias ? 1.0 : 0.0;
      for (std::size_t j = 0; j < d_in; ++j) act_corr += acts[i * d_in + j] * val_acts[v * d_in + j];
      total += err_corr * act_corr;
    }
    out[i] += total * inv_v;
  }
}

void ghost_weighted_block(std::size_t batch, std::size_t d_in, std::size_t err_stride,
                          std::size_t r0, std::size_t rows, const double* acts,
                          const double* errs, const double* u_rows, const double* u_bias,
                          double* out) {
  for (std::size_t i = 0; i < batch; ++i) {
    const double* a = acts + i * d_in;
    const double* e = errs + i * err_stride + r0;
    double acc = out[i];
    for (std::size_t r = 0; r < rows; ++r) {
      double proj = u_bias ? u_bias[r] : 0.0;
      const double* u = u_rows + r * d_in;
      for (std::size_t j = 0; j < d_in; ++j) proj += u[j] * a[j];
      acc += e[r] * proj;
    }
    out[i] = acc;
  }
}

}  // namespace serial

namespace parallel {

// Row-blocked i-p-j order: c[i, j] still accumulates over p = 0..k-1 in order,
// so results match serial::gemm_nn exactly.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
      c[i * n + j] = sum;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void ghost_pair_layer(std::size_t batch, std::size_t val_count, std::size_t d_in,
                      std::size_t d_out, const double* acts, const double* errs,
                      const double* val_acts, const double* val_errs, bool bias, double* out) {
  const double inv_v = 1.0 / static_cast<double>(val_count);
  const auto n = static_cast<long long>(batch);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* e = errs + i * d_out;
    const double* a = acts + i * d_in;
    double total = 0.0;
    for (std::size_t v = 0; v < val_count; ++v) {
      const double* ev = val_errs + v * d_out;
      const double* av = val_acts + v * d_in;
      double err_corr = 0.0;
      for (std::size_t j = 0; j < d_out; ++j) err_corr += e[j] * ev[j];
      double act_corr = bias ? 1.0 : 0.0;
      for (std::size_t j = 0; j < d_in; ++j) act_corr += a[j] * av[j];
      total += err_corr * act_corr;
    }
    out[i] += total * inv_v;
  }
}

void ghost_weighted_block(std::size_t batch, std::size_t d_in, std::size_t err_stride,
                          std::size_t r0, std::size_t rows, const double* acts,
                          const double* errs, const double* u_rows, const double* u_bias,
                          double* out) {
  // Four samples share each pass over a row of u; every (sample, row) dot
  // product still sums j = 0..d_in-1 in order, as in the serial kernel.
  constexpr std::size_t kGroup = 4;
  const auto groups = static_cast<long long>((batch + kGroup - 1) / kGroup);
#pragma omp parallel for schedule(static)
  for (long long gg = 0; gg < groups; ++gg) {
    const std::size_t i0 = static_cast<std::size_t>(gg) * kGroup;
    const std::size_t n = std::min(kGroup, batch - i0);
    if (n < kGroup) {
      for (std::size_t i = i0; i < i0 + n; ++i) {
        const double* a = acts + i * d_in;
        const double* e = errs + i * err_stride + r0;
        double acc = out[i];
        for (std::size_t r = 0; r < rows; ++r) {
          double proj = u_bias ? u_bias[r] : 0.0;
          const double* u = u_rows + r * d_in;
          for (std::size_t j = 0; j < d_in; ++j) proj += u[j] * a[j];
          acc += e[r] * proj;
        }
        out[i] = acc;
      }
      continue;
    }
    const double* a0 = acts + i0 * d_in;
    const double* a1 = a0 + d_in;
    const double* a2 = a1 + d_in;
    const double* a3 = a2 + d_in;
    double acc0 = out[i0], acc1 = out[i0 + 1], acc2 = out[i0 + 2], acc3 = out[i0 + 3];
    for (std::size_t r = 0; r < rows; ++r) {
      const double b = u_bias ? u_bias[r] : 0.0;
      double p0 = b, p1 = b, p2 = b, p3 = b;
      const double* u = u_rows + r * d_in;
      for (std::size_t j = 0; j < d_in; ++j) {
        const double uj = u[j];
        p0 += uj * a0[j];
        p1 += uj * a1[j];
        p2 += uj * a2[j];
        p3 += uj * a3[j];
      }
      const std::size_t col = r0 + r;
      acc0 += errs[i0 * err_stride + col] * p0;
      acc1 += errs[(i0 + 1) * err_stride + col] * p1;
      acc2 += errs[(i0 + 2) * err_stride + col] * p2;
      acc3 += errs[(i0 + 3) * err_stride + col] * p3;
    }
    out[i0] = acc0;
    out[i0 + 1] = acc1;
    out[i0 + 2] = acc2;
    out[i0 + 3] = acc3;
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace inrun::kernels
