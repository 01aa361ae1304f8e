#pragma once

#include <cstddef>

// Inner loops shared by the model and the attribution scorers.
//
// Every kernel comes in two flavours with identical signatures: `serial` is the
// plain reference loop nest, `parallel` distributes output rows (or samples)
// over OpenMP threads. Each output element is accumulated by exactly one thread
// in the same order as the serial loop, so the two agree bit for bit for any
// thread count.
//
// All matrices are dense row-major with the leading dimension equal to the
// column count unless a stride is given.

namespace inrun::kernels {

namespace serial {

// c[m x n] = a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);

// Layer contribution to <g_i, g_val> for every training sample i:
//   out[i] += (1/V) sum_v (err_i . err_v) * (act_i . act_v + bias)
// where bias is 1 when the layer carries a bias vector (constant activation 1).
void ghost_pair_layer(std::size_t batch, std::size_t val_count, std::size_t d_in,
                      std::size_t d_out, const double* acts, const double* errs,
                      const double* val_acts, const double* val_errs, bool bias, double* out);

// Layer contribution to <g_i, u> for rows [r0, r0 + rows) of the layer:
//   out[i] += sum_r errs[i, r0 + r] * (u_rows[r] . act_i + u_bias[r])
// u_rows is rows x d_in; u_bias may be null.
void ghost_weighted_block(std::size_t batch, std::size_t d_in, std::size_t err_stride,
                          std::size_t r0, std::size_t rows, const double* acts,
                          const double* errs, const double* u_rows, const double* u_bias,
                          double* out);

}  // namespace serial

namespace parallel {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void ghost_pair_layer(std::size_t batch, std::size_t val_count, std::size_t d_in,
                      std::size_t d_out, const double* acts, const double* errs,
                      const double* val_acts, const double* val_errs, bool bias, double* out);
void ghost_weighted_block(std::size_t batch, std::size_t d_in, std::size_t err_stride,
                          std::size_t r0, std::size_t rows, const double* acts,
                          const double* errs, const double* u_rows, const double* u_bias,
                          double* out);

}  // namespace parallel

int max_threads();

}  // namespace inrun::kernels
