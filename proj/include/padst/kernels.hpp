#pragma once

#include <cstddef>
#include <span>

// Dense CPU kernels. Each kernel has a plain serial reference (kept for tests
// and the benchmark) and an OpenMP row-parallel version used by the graph.
// The parallel kernels accumulate every output element in the same order as
// the reference, so both produce bitwise-identical results at any thread count.

namespace padst::kernels {

enum class Trans { no, yes };

struct GemmShape {
  std::size_t m = 0;  // rows of C
  std::size_t n = 0;  // cols of C
  std::size_t k = 0;  // contracted dimension
  Trans ta = Trans::no;
  Trans tb = Trans::no;
};

// C (+)= op(A) * op(B), where op(A) is m x k and op(B) is k x n.
// A is stored m x k (or k x m when transposed); likewise for B.
namespace serial {
template <class Real>
void gemm(const GemmShape& s, const Real* a, const Real* b, Real* c, bool accumulate);
}  // namespace serial

namespace parallel {
template <class Real>
void gemm(const GemmShape& s, const Real* a, const Real* b, Real* c, bool accumulate);
}  // namespace parallel

/// Layout of a batched multi-head attention call. Queries, keys and values
/// are packed as [batch * len x heads * head_dim] row-major matrices.
struct AttentionDims {
  std::size_t batch = 0;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  bool causal = false;
};

// probs receives the softmax weights, [batch * heads * query_len x key_len].
// Keys at index >= key_lengths[b] (and future keys when causal) are masked.
namespace serial {
template <class Real>
void attention_forward(const AttentionDims& d, std::span<const int> key_lengths,
                       const Real* q, const Real* k, const Real* v, Real* probs, Real* out);
template <class Real>
void attention_backward(const AttentionDims& d, const Real* q, const Real* k,
                        const Real* v, const Real* probs, const Real* dout, Real* dq,
                        Real* dk, Real* dv);
template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y);
}  // namespace serial

namespace parallel {
template <class Real>
void attention_forward(const AttentionDims& d, std::span<const int> key_lengths,
                       const Real* q, const Real* k, const Real* v, Real* probs, Real* out);
template <class Real>
void attention_backward(const AttentionDims& d, const Real* q, const Real* k,
                        const Real* v, const Real* probs, const Real* dout, Real* dq,
                        Real* dk, Real* dv);
template <class Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y);
}  // namespace parallel

/// Threads available to the parallel kernels (1 without OpenMP).
int max_threads();

}  // namespace padst::kernels
