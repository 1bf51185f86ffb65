#include "padst/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace padst::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

template <class Real>
Real a_at(const GemmShape& s, const Real* a, std::size_t i, std::size_t p) {
  return s.ta == Trans::no ? a[i * s.k + p] : a[p * s.m + i];
}

template <class Real>
Real b_at(const GemmShape& s, const Real* b, std::size_t p, std::size_t j) {
  return s.tb == Trans::no ? b[p * s.n + j] : b[j * s.k + p];
}

// One output row of C = op(A) * B with B already in k x n layout.
template <class Real>
void gemm_row(const GemmShape& s, const Real* a, const Real* b, Real* c, std::size_t i,
              bool accumulate) {
  Real* crow = c + i * s.n;
  if (!accumulate) std::fill(crow, crow + s.n, Real(0));
  for (std::size_t p = 0; p < s.k; ++p) {
    const Real aip = a_at(s, a, i, p);
    const Real* brow = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) crow[j] += aip * brow[j];
  }
}

template <class Real>
void head_forward(const AttentionDims& d, std::span<const int> key_lengths, const Real* q,
                  const Real* k, const Real* v, Real* probs, Real* out, std::size_t b,
                  std::size_t h) {
  const std::size_t width = d.heads * d.head_dim;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(d.head_dim));
  const std::size_t valid = static_cast<std::size_t>(key_lengths[b]);
  for (std::size_t i = 0; i < d.query_len; ++i) {
    const Real* qi = q + (b * d.query_len + i) * width + h * d.head_dim;
    Real* p = probs + ((b * d.heads + h) * d.query_len + i) * d.key_len;
    std::size_t limit = std::min(valid, d.key_len);
    if (d.causal) limit = std::min(limit, i + 1);
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < limit; ++j) {
      const Real* kj = k + (b * d.key_len + j) * width + h * d.head_dim;
      Real dot = 0;
      for (std::size_t e = 0; e < d.head_dim; ++e) dot += qi[e] * kj[e];
      p[j] = dot * scale;
      mx = std::max(mx, p[j]);
    }
    Real total = 0;
    for (std::size_t j = 0; j < limit; ++j) {
      p[j] = std::exp(p[j] - mx);
      total += p[j];
    }
    for (std::size_t j = 0; j < limit; ++j) p[j] /= total;
    for (std::size_t j = limit; j < d.key_len; ++j) p[j] = 0;

    Real* oi = out + (b * d.query_len + i) * width + h * d.head_dim;
    std::fill(oi, oi + d.head_dim, Real(0));
    for (std::size_t j = 0; j < limit; ++j) {
      const Real* vj = v + (b * d.key_len + j) * width + h * d.head_dim;
      for (std::size_t e = 0; e < d.head_dim; ++e) oi[e] += p[j] * vj[e];
    }
  }
}

template <class Real>
void head_backward(const AttentionDims& d, const Real* q, const Real* k, const Real* v,
                   const Real* probs, const Real* dout, Real* dq, Real* dk, Real* dv,
                   std::size_t b, std::size_t h) {
  const std::size_t width = d.heads * d.head_dim;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(d.head_dim));
  auto row = [&](std::size_t t, std::size_t len) { return (b * len + t) * width + h * d.head_dim; };

  for (std::size_t j = 0; j < d.key_len; ++j) {
    std::fill(dk + row(j, d.key_len), dk + row(j, d.key_len) + d.head_dim, Real(0));
    std::fill(dv + row(j, d.key_len), dv + row(j, d.key_len) + d.head_dim, Real(0));
  }
  std::vector<Real> dscore(d.key_len);
  for (std::size_t i = 0; i < d.query_len; ++i) {
    const Real* p = probs + ((b * d.heads + h) * d.query_len + i) * d.key_len;
    const Real* doi = dout + row(i, d.query_len);
    Real weighted = 0;
    for (std::size_t j = 0; j < d.key_len; ++j) {
      if (p[j] == Real(0)) {
        dscore[j] = 0;
        continue;
      }
      const Real* vj = v + row(j, d.key_len);
      Real dp = 0;
      for (std::size_t e = 0; e < d.head_dim; ++e) dp += doi[e] * vj[e];
      dscore[j] = dp;
      weighted += p[j] * dp;
    }
    for (std::size_t j = 0; j < d.key_len; ++j) dscore[j] = p[j] * (dscore[j] - weighted);

    Real* dqi = dq + row(i, d.query_len);
    const Real* qi = q + row(i, d.query_len);
    std::fill(dqi, dqi + d.head_dim, Real(0));
    for (std::size_t j = 0; j < d.key_len; ++j) {
      if (p[j] == Real(0)) continue;
      const Real* kj = k + row(j, d.key_len);
      Real* dkj = dk + row(j, d.key_len);
      Real* dvj = dv + row(j, d.key_len);
      const Real ds = dscore[j] * scale;
      for (std::size_t e = 0; e < d.head_dim; ++e) {
        dqi[e] += ds * kj[e];
        dkj[e] += ds * qi[e];
        dvj[e] += p[j] * doi[e];
      }
    }
  }
}

template <class Real>
void softmax_row(std::size_t cols, const Real* x, Real* y) {
  Real mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  Real total = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
}

}  // namespace

namespace serial {

template <class Real>
void gemm(const GemmShape& s, const Real* a, const Real* b, Real* c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      Real sum = accumulate ? c[i * s.n + j] : Real(0);
      for (std::size_t p = 0; p < s.k; ++p) sum += a_at(s, a, i, p) * b_at(s, b, p, j);
      c[i * s.n + j] = sum;
    }
  }
}

template <class Real>
void attention_forward(const AttentionDims& d, std::span<const int> key_lengths,
                       const Real* q, const Real* k, const Real* v, Real* probs, Real* out) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t h = 0; h < d.heads; ++h)
      head_forward(d, key_lengths, q, k, v, probs, out, b, h);
}

template <class Real>
void attention_backward(const AttentionDims& d, const Real* q, const Real* k, const Real* v,
                        const Real* probs, const Real* dout, Real* dq, Real* dk, Real* dv) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t h = 0; h < d.heads; ++h)
      head_backward(d, q, k, v, probs, dout, dq, dk, dv, b, h);
}

template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(cols, x + r * cols, y + r * cols);
}

}  // namespace serial

namespace parallel {

template <class Real>
void gemm(const GemmShape& s, const Real* a, const Real* b, Real* c, bool accumulate) {
  std::vector<Real> bt;
  const Real* bk = b;
  if (s.tb == Trans::yes) {
    bt.resize(s.k * s.n);
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t p = 0; p < s.k; ++p) bt[p * s.n + j] = b[j * s.k + p];
    bk = bt.data();
  }
  GemmShape row_shape = s;
  row_shape.tb = Trans::no;
  const auto rows = static_cast<std::ptrdiff_t>(s.m);
  [[maybe_unused]] const bool wide = s.m * s.n * s.k >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_row(row_shape, a, bk, c, static_cast<std::size_t>(i), accumulate);
}

template <class Real>
void attention_forward(const AttentionDims& d, std::span<const int> key_lengths,
                       const Real* q, const Real* k, const Real* v, Real* probs, Real* out) {
  const auto tasks = static_cast<std::ptrdiff_t>(d.batch * d.heads);
  [[maybe_unused]] const bool wide =
      d.batch * d.heads * d.query_len * d.key_len * d.head_dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t t = 0; t < tasks; ++t) {
    const auto u = static_cast<std::size_t>(t);
    head_forward(d, key_lengths, q, k, v, probs, out, u / d.heads, u % d.heads);
  }
}

template <class Real>
void attention_backward(const AttentionDims& d, const Real* q, const Real* k, const Real* v,
                        const Real* probs, const Real* dout, Real* dq, Real* dk, Real* dv) {
  const auto tasks = static_cast<std::ptrdiff_t>(d.batch * d.heads);
  [[maybe_unused]] const bool wide =
      d.batch * d.heads * d.query_len * d.key_len * d.head_dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t t = 0; t < tasks; ++t) {
    const auto u = static_cast<std::size_t>(t);
    head_backward(d, q, k, v, probs, dout, dq, dk, dv, u / d.heads, u % d.heads);
  }
}

template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
  [[maybe_unused]] const bool wide = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto u = static_cast<std::size_t>(r);
    softmax_row(cols, x + u * cols, y + u * cols);
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

#define PADST_INSTANTIATE_KERNELS(Real)                                                   \
  template void serial::gemm<Real>(const GemmShape&, const Real*, const Real*, Real*,    \
                                   bool);                                                 \
  template void parallel::gemm<Real>(const GemmShape&, const Real*, const Real*, Real*,  \
                                     bool);                                               \
  template void serial::attention_forward<Real>(const AttentionDims&, std::span<const int>, \
                                                const Real*, const Real*, const Real*,    \
                                                Real*, Real*);                            \
  template void parallel::attention_forward<Real>(const AttentionDims&,                  \
                                                  std::span<const int>, const Real*,      \
                                                  const Real*, const Real*, Real*, Real*); \
  template void serial::attention_backward<Real>(const AttentionDims&, const Real*,      \
                                                 const Real*, const Real*, const Real*,   \
                                                 const Real*, Real*, Real*, Real*);       \
  template void parallel::attention_backward<Real>(const AttentionDims&, const Real*,    \
                                                   const Real*, const Real*, const Real*, \
                                                   const Real*, Real*, Real*, Real*);     \
  template void serial::softmax_rows<Real>(std::size_t, std::size_t, const Real*, Real*); \
  template void parallel::softmax_rows<Real>(std::size_t, std::size_t, const Real*, Real*);

PADST_INSTANTIATE_KERNELS(float)
PADST_INSTANTIATE_KERNELS(double)

}  // namespace padst::kernels
