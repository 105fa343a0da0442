#pragma once

#include <algorithm>
#include <cmath>

#include "duffin/autograd.hpp"

namespace duffin {

enum class Mode { train, infer };

namespace detail {

// Images are rank-3 (H,W,C) or rank-4 (B,H,W,C); rank 3 is batch 1.
struct ImgDims {
  int b, h, w, c;
  bool batched;
};

inline ImgDims img_dims(const Shape& s, const char* what) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw shape_error(std::string(what) + ": expected rank 3 or 4 image, got " + shape_str(s));
}

// Vectors are rank-1 (N) or rank-2 (B,N).
struct VecDims {
  int b, n;
  bool batched;
};

inline VecDims vec_dims(const Shape& s, const char* what) {
  if (s.size() == 1) return {1, s[0], false};
  if (s.size() == 2) return {s[0], s[1], true};
  throw shape_error(std::string(what) + ": expected rank 1 or 2 vector, got " + shape_str(s));
}

template <typename T, typename Fn>
Var<T> make_op(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents, Fn&& fn) {
  Var<T> out(std::move(value));
  Node<T>& n = out.node();
  for (const auto& p : parents)
    if (p->requires_grad) n.requires_grad = true;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward_fn = std::forward<Fn>(fn);
  return out;
}

// ---- small dense GEMM kernels ----------------------------------------------
// Row-major C (MxN) += A (MxK) . B (KxN). Four-row register tiles with the
// K-loop innermost share each B row across rows; the fixed NB=64 variant is
// the hot shape (64 decoder channels).

template <typename T, int NB>
void gemm_rowblock(int i, int M, int N, int K, int j0, int nb, const T* A, const T* B, T* C) {
  for (; i + 4 <= M; i += 4) {
    T acc0[NB] = {}, acc1[NB] = {}, acc2[NB] = {}, acc3[NB] = {};
    const T* a0 = A + static_cast<size_t>(i) * K;
    const T* a1 = a0 + K;
    const T* a2 = a1 + K;
    const T* a3 = a2 + K;
    for (int k = 0; k < K; ++k) {
      const T* __restrict__ brow = B + static_cast<size_t>(k) * N + j0;
      const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
#pragma omp simd
      for (int j = 0; j < nb; ++j) {
        acc0[j] += v0 * brow[j];
        acc1[j] += v1 * brow[j];
        acc2[j] += v2 * brow[j];
        acc3[j] += v3 * brow[j];
      }
    }
    T* c0 = C + static_cast<size_t>(i) * N + j0;
#pragma omp simd
    for (int j = 0; j < nb; ++j) {
      c0[j] += acc0[j];
      c0[N + j] += acc1[j];
      c0[2 * N + j] += acc2[j];
      c0[3 * N + j] += acc3[j];
    }
  }
  for (; i < M; ++i) {
    T acc[NB] = {};
    const T* arow = A + static_cast<size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const T* __restrict__ brow = B + static_cast<size_t>(k) * N + j0;
      const T v = arow[k];
#pragma omp simd
      for (int j = 0; j < nb; ++j) acc[j] += v * brow[j];
    }
    T* crow = C + static_cast<size_t>(i) * N + j0;
#pragma omp simd
    for (int j = 0; j < nb; ++j) crow[j] += acc[j];
  }
}

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int j0 = 0; j0 < N; j0 += 64) {
    const int nb = std::min(64, N - j0);
    if (nb == 64)
      gemm_rowblock<T, 64>(0, M, N, K, j0, 64, A, B, C);
    else
      gemm_rowblock<T, 64>(0, M, N, K, j0, nb, A, B, C);
  }
}

// C (MxN) += A^T . B with A stored row-major as (KxM).
template <typename T, int NB>
void gemm_t_rowblock(int i, int M, int N, int K, int j0, int nb, const T* A, const T* B, T* C) {
  for (; i + 4 <= M; i += 4) {
    T acc0[NB] = {}, acc1[NB] = {}, acc2[NB] = {}, acc3[NB] = {};
    for (int k = 0; k < K; ++k) {
      const T* __restrict__ brow = B + static_cast<size_t>(k) * N + j0;
      const T* acol = A + static_cast<size_t>(k) * M + i;
      const T v0 = acol[0], v1 = acol[1], v2 = acol[2], v3 = acol[3];
#pragma omp simd
      for (int j = 0; j < nb; ++j) {
        acc0[j] += v0 * brow[j];
        acc1[j] += v1 * brow[j];
        acc2[j] += v2 * brow[j];
        acc3[j] += v3 * brow[j];
      }
    }
    T* c0 = C + static_cast<size_t>(i) * N + j0;
#pragma omp simd
    for (int j = 0; j < nb; ++j) {
      c0[j] += acc0[j];
      c0[N + j] += acc1[j];
      c0[2 * N + j] += acc2[j];
      c0[3 * N + j] += acc3[j];
    }
  }
  for (; i < M; ++i) {
    T acc[NB] = {};
    for (int k = 0; k < K; ++k) {
      const T* __restrict__ brow = B + static_cast<size_t>(k) * N + j0;
      const T v = A[static_cast<size_t>(k) * M + i];
#pragma omp simd
      for (int j = 0; j < nb; ++j) acc[j] += v * brow[j];
    }
    T* crow = C + static_cast<size_t>(i) * N + j0;
#pragma omp simd
    for (int j = 0; j < nb; ++j) crow[j] += acc[j];
  }
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int j0 = 0; j0 < N; j0 += 64) {
    const int nb = std::min(64, N - j0);
    if (nb == 64)
      gemm_t_rowblock<T, 64>(0, M, N, K, j0, 64, A, B, C);
    else
      gemm_t_rowblock<T, 64>(0, M, N, K, j0, nb, A, B, C);
  }
}

// Patch geometry shared by the conv2d passes.
struct ConvGeom {
  ImgDims d;
  int kh, kw, cin, cout, ho, wo, sh, sw, ph, pw;
  int patch() const { return kh * kw * cin; }
  int pixels() const { return ho * wo; }
};

// Gathers the receptive field of every output pixel of one sample into a
// (pixels x patch) matrix whose column order matches the kernel layout.
template <typename T>
void im2col(const ConvGeom& g, const T* xb, T* cols) {
  const int K = g.patch();
  for (int io = 0; io < g.ho; ++io) {
    const int i0 = io * g.sh - g.ph;
    for (int jo = 0; jo < g.wo; ++jo) {
      const int j0 = jo * g.sw - g.pw;
      T* prow = cols + (static_cast<size_t>(io) * g.wo + jo) * K;
      for (int ki = 0; ki < g.kh; ++ki) {
        const int i = i0 + ki;
        for (int kj = 0; kj < g.kw; ++kj) {
          const int j = j0 + kj;
          T* dst = prow + (static_cast<size_t>(ki) * g.kw + kj) * g.cin;
          if (i < 0 || i >= g.d.h || j < 0 || j >= g.d.w) {
            std::fill(dst, dst + g.cin, T(0));
          } else {
            const T* src = xb + (static_cast<size_t>(i) * g.d.w + j) * g.cin;
            std::copy(src, src + g.cin, dst);
          }
        }
      }
    }
  }
}

// Scatter-adds a (pixels x patch) gradient back onto the input image.
template <typename T>
void col2im_add(const ConvGeom& g, const T* cols, T* dxb) {
  const int K = g.patch();
  for (int io = 0; io < g.ho; ++io) {
    const int i0 = io * g.sh - g.ph;
    for (int jo = 0; jo < g.wo; ++jo) {
      const int j0 = jo * g.sw - g.pw;
      const T* prow = cols + (static_cast<size_t>(io) * g.wo + jo) * K;
      for (int ki = 0; ki < g.kh; ++ki) {
        const int i = i0 + ki;
        if (i < 0 || i >= g.d.h) continue;
        for (int kj = 0; kj < g.kw; ++kj) {
          const int j = j0 + kj;
          if (j < 0 || j >= g.d.w) continue;
          const T* __restrict__ src = prow + (static_cast<size_t>(ki) * g.kw + kj) * g.cin;
          T* __restrict__ dst = dxb + (static_cast<size_t>(i) * g.d.w + j) * g.cin;
#pragma omp simd
          for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace detail

// ---- convolution ---------------------------------------------------------

// 2D cross-correlation with zero padding. Kernels are (kh,kw,Cin,Cout),
// bias is (Cout). Output spatial dims must divide exactly by the stride.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride_h, int stride_w,
              int pad_h, int pad_w) {
  const auto d = detail::img_dims(x.shape(), "conv2d input");
  if (w.shape().size() != 4) throw shape_error("conv2d kernel must be rank 4 (kh,kw,Cin,Cout)");
  const int kh = w.shape()[0], kw = w.shape()[1], cin = w.shape()[2], cout = w.shape()[3];
  if (cin != d.c)
    throw shape_error("conv2d: kernel Cin " + std::to_string(cin) + " != input C " +
                      std::to_string(d.c));
  if (b.shape() != Shape{cout}) throw shape_error("conv2d: bias must have one value per kernel");
  if (stride_h < 1 || stride_w < 1 || pad_h < 0 || pad_w < 0)
    throw shape_error("conv2d: invalid stride/padding");
  if (kh > d.h + 2 * pad_h || kw > d.w + 2 * pad_w)
    throw shape_error("conv2d: kernel larger than padded input");
  if ((d.h + 2 * pad_h - kh) % stride_h != 0 || (d.w + 2 * pad_w - kw) % stride_w != 0)
    throw shape_error("conv2d: stride does not divide padded extent evenly");
  const int ho = (d.h + 2 * pad_h - kh) / stride_h + 1;
  const int wo = (d.w + 2 * pad_w - kw) / stride_w + 1;

  const detail::ConvGeom geom{d,  kh,       kw,       cin,   cout, ho,
                              wo, stride_h, stride_w, pad_h, pad_w};

  Shape out_shape = d.batched ? Shape{d.b, ho, wo, cout} : Shape{ho, wo, cout};
  Tensor<T> y(out_shape);
  {
    const T* xp = x.value().data();
    const T* wp = w.value().data();
    const T* bp = b.value().data();
    T* yp = y.data();
    const int pixels = geom.pixels();
    const int K = geom.patch();
    std::vector<T> cols(static_cast<size_t>(pixels) * K);
    for (int bi = 0; bi < d.b; ++bi) {
      const T* xb = xp + static_cast<size_t>(bi) * d.h * d.w * d.c;
      T* yb = yp + static_cast<size_t>(bi) * pixels * cout;
      detail::im2col(geom, xb, cols.data());
      for (int p = 0; p < pixels; ++p)
        std::copy(bp, bp + cout, yb + static_cast<size_t>(p) * cout);
      detail::gemm_nn(pixels, cout, K, cols.data(), wp, yb);
    }
  }

  auto xn = x.ptr();
  auto wn = w.ptr();
  auto bn = b.ptr();
  return detail::make_op<T>(std::move(y), {xn, wn, bn}, [xn, wn, bn, geom](Node<T>& self) {
    const auto& d = geom.d;
    const int cin = geom.cin, cout = geom.cout, K = geom.patch(), pixels = geom.pixels();
    const T* gp = self.grad.data();
    const T* xp = xn->value.data();
    const T* wp = wn->value.data();
    const bool need_dx = xn->requires_grad;
    const bool need_dw = wn->requires_grad;

    if (bn->requires_grad) {
      T* __restrict__ dbp = bn->grad.data();
      const size_t rows = static_cast<size_t>(d.b) * pixels;
      for (size_t s = 0; s < rows; ++s) {
        const T* __restrict__ grow = gp + s * cout;
#pragma omp simd
        for (int co = 0; co < cout; ++co) dbp[co] += grow[co];
      }
    }

    // dW = sum_b cols_b^T . dY_b ; dX = col2im(dY_b . W^T)
    std::vector<T> wt;
    if (need_dx) {
      wt.resize(static_cast<size_t>(K) * cout);
      for (int k = 0; k < K; ++k)
        for (int co = 0; co < cout; ++co)
          wt[static_cast<size_t>(co) * K + k] = wp[static_cast<size_t>(k) * cout + co];
    }
    std::vector<T> cols(need_dw ? static_cast<size_t>(pixels) * K : 0);
    std::vector<T> dcols(need_dx ? static_cast<size_t>(pixels) * K : 0);
    for (int bi = 0; bi < d.b; ++bi) {
      const T* xb = xp + static_cast<size_t>(bi) * d.h * d.w * d.c;
      const T* gb = gp + static_cast<size_t>(bi) * pixels * cout;
      if (need_dw) {
        detail::im2col(geom, xb, cols.data());
        detail::gemm_tn(K, cout, pixels, cols.data(), gb, wn->grad.data());
      }
      if (need_dx) {
        std::fill(dcols.begin(), dcols.end(), T(0));
        detail::gemm_nn(pixels, K, cout, gb, wt.data(), dcols.data());
        detail::col2im_add(geom, dcols.data(),
                           xn->grad.data() + static_cast<size_t>(bi) * d.h * d.w * d.c);
      }
    }
  });
}

// 1D convolution along the channel axis of a (B,)1,1,C tensor with a single
// odd-length kernel and same-length zero padding. The bias, when given, is a
// single scalar added to every position.
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& k, int padding, const Var<T>& bias = Var<T>()) {
  const auto d = detail::img_dims(x.shape(), "conv1d input");
  if (d.h != 1 || d.w != 1) throw shape_error("conv1d input must be (B,)1x1xC");
  if (k.shape().size() != 1) throw shape_error("conv1d kernel must be rank 1");
  const int kk = k.shape()[0];
  if (kk % 2 == 0) throw shape_error("conv1d kernel length must be odd");
  if (padding != (kk - 1) / 2)
    throw shape_error("conv1d: padding must be (k-1)/2 to preserve the channel count");
  if (bias.defined() && bias.value().numel() != 1)
    throw shape_error("conv1d bias must be a single scalar");

  const int C = d.c;
  Tensor<T> y(x.shape());
  {
    const T* xp = x.value().data();
    const T* kp = k.value().data();
    const T b0 = bias.defined() ? bias.value()[0] : T(0);
    T* yp = y.data();
    for (int bi = 0; bi < d.b; ++bi) {
      const T* xb = xp + static_cast<size_t>(bi) * C;
      T* yb = yp + static_cast<size_t>(bi) * C;
      for (int c = 0; c < C; ++c) {
        T acc = b0;
        for (int t = 0; t < kk; ++t) {
          const int src = c + t - padding;
          if (src >= 0 && src < C) acc += kp[t] * xb[src];
        }
        yb[c] = acc;
      }
    }
  }

  auto xn = x.ptr();
  auto kn = k.ptr();
  std::vector<std::shared_ptr<Node<T>>> parents{xn, kn};
  auto bn2 = bias.defined() ? bias.ptr() : nullptr;
  if (bn2) parents.push_back(bn2);
  return detail::make_op<T>(std::move(y), std::move(parents), [xn, kn, bn2, d, kk, padding](Node<T>& self) {
    const int C = d.c;
    const T* gp = self.grad.data();
    const T* xp = xn->value.data();
    const T* kp = kn->value.data();
    for (int bi = 0; bi < d.b; ++bi) {
      const T* xb = xp + static_cast<size_t>(bi) * C;
      const T* gb = gp + static_cast<size_t>(bi) * C;
      T* dxb = xn->grad.data() + static_cast<size_t>(bi) * C;
      for (int c = 0; c < C; ++c) {
        const T g = gb[c];
        if (bn2 && bn2->requires_grad) bn2->grad[0] += g;
        for (int t = 0; t < kk; ++t) {
          const int src = c + t - padding;
          if (src < 0 || src >= C) continue;
          if (xn->requires_grad) dxb[src] += kp[t] * g;
          if (kn->requires_grad) kn->grad[t] += xb[src] * g;
        }
      }
    }
  });
}

// ---- dense ---------------------------------------------------------------

// out_j = sum_i w[j,i] x_i + b_j, applied per sample for rank-2 inputs.
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto d = detail::vec_dims(x.shape(), "dense input");
  if (w.shape().size() != 2) throw shape_error("dense weights must be rank 2 (m,n)");
  const int m = w.shape()[0], n = w.shape()[1];
  if (n != d.n)
    throw shape_error("dense: weight n " + std::to_string(n) + " != input size " +
                      std::to_string(d.n));
  if (b.shape() != Shape{m}) throw shape_error("dense: bias size must equal output size");

  Tensor<T> y(d.batched ? Shape{d.b, m} : Shape{m});
  {
    const T* xp = x.value().data();
    const T* wp = w.value().data();
    const T* bp = b.value().data();
    T* yp = y.data();
    for (int bi = 0; bi < d.b; ++bi) {
      const T* __restrict__ xb = xp + static_cast<size_t>(bi) * n;
      T* yb = yp + static_cast<size_t>(bi) * m;
      for (int j = 0; j < m; ++j) {
        const T* __restrict__ wrow = wp + static_cast<size_t>(j) * n;
        T acc = T(0);
#pragma omp simd reduction(+ : acc)
        for (int i = 0; i < n; ++i) acc += wrow[i] * xb[i];
        yb[j] = acc + bp[j];
      }
    }
  }

  auto xn = x.ptr();
  auto wn = w.ptr();
  auto bn = b.ptr();
  return detail::make_op<T>(std::move(y), {xn, wn, bn}, [xn, wn, bn, d, m, n](Node<T>& self) {
    const T* gp = self.grad.data();
    const T* xp = xn->value.data();
    const T* wp = wn->value.data();
    for (int bi = 0; bi < d.b; ++bi) {
      const T* __restrict__ xb = xp + static_cast<size_t>(bi) * n;
      const T* gb = gp + static_cast<size_t>(bi) * m;
      T* __restrict__ dxb = xn->grad.data() + static_cast<size_t>(bi) * n;
      for (int j = 0; j < m; ++j) {
        const T g = gb[j];
        if (bn->requires_grad) bn->grad[j] += g;
        if (wn->requires_grad) {
          T* __restrict__ dwrow = wn->grad.data() + static_cast<size_t>(j) * n;
#pragma omp simd
          for (int i = 0; i < n; ++i) dwrow[i] += g * xb[i];
        }
        if (xn->requires_grad) {
          const T* __restrict__ wrow = wp + static_cast<size_t>(j) * n;
#pragma omp simd
          for (int i = 0; i < n; ++i) dxb[i] += g * wrow[i];
        }
      }
    }
  });
}

// ---- batch normalization ---------------------------------------------------

// Batch-norm layer state: learned per-channel scale/shift plus running
// statistics and the number of train-mode batches seen. Everything lives in
// the parameter store so it persists through serialization.
template <typename T>
struct BatchNormState {
  Var<T> gamma;  // trainable scale, initialized to 1
  Var<T> beta;   // trainable shift, initialized to 0
  Var<T> running_mean;
  Var<T> running_var;
  Var<T> batches_seen;  // single value; infer mode requires it to be > 0

  static BatchNormState create(ParameterStore<T>& store, const std::string& prefix, int channels,
                               bool mark_populated, T gamma_init = T(1)) {
    BatchNormState s;
    Tensor<T> ones({channels});
    ones.fill(T(1));
    Tensor<T> gamma0({channels});
    gamma0.fill(gamma_init);
    s.gamma = store.add(prefix + ".gamma", std::move(gamma0), true);
    s.beta = store.add(prefix + ".beta", Tensor<T>({channels}), true);
    s.running_mean = store.add(prefix + ".running_mean", Tensor<T>({channels}), false);
    s.running_var = store.add(prefix + ".running_var", ones, false);
    s.batches_seen =
        store.add(prefix + ".batches_seen", Tensor<T>({1}, mark_populated ? T(1) : T(0)), false);
    return s;
  }
};

// Standardizes each channel with batch statistics (train) or running
// statistics (infer), then applies the learned scale and shift. Running
// stats update with momentum 0.9 in train mode.
template <typename T>
Var<T> batch_norm(const Var<T>& x, BatchNormState<T>& state, Mode mode, T zeta,
                  T momentum = T(0.9)) {
  if (x.shape().size() != 4) throw shape_error("batch_norm expects a rank-4 (B,H,W,C) tensor");
  const int B = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3];
  if (zeta <= T(0)) throw config_error("batch_norm: zeta must be positive");
  require_shape(state.running_mean.value(), {C}, "batch_norm running mean");
  const size_t spatial = static_cast<size_t>(B) * H * W;

  std::vector<T> mean(C, T(0)), inv_std(C);
  Tensor<T> y(x.shape());
  const T* xp = x.value().data();
  const T* gam = state.gamma.value().data();
  const T* bet = state.beta.value().data();
  T* yp = y.data();

  if (mode == Mode::train) {
    std::vector<T> var(C, T(0));
    for (size_t s = 0; s < spatial; ++s) {
      const T* row = xp + s * C;
      for (int c = 0; c < C; ++c) mean[c] += row[c];
    }
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<T>(spatial);
    for (size_t s = 0; s < spatial; ++s) {
      const T* row = xp + s * C;
      for (int c = 0; c < C; ++c) {
        const T dlt = row[c] - mean[c];
        var[c] += dlt * dlt;
      }
    }
    for (int c = 0; c < C; ++c) var[c] /= static_cast<T>(spatial);
    for (int c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + zeta);
    for (int c = 0; c < C; ++c) {
      T& rm = state.running_mean.value()[c];
      T& rv = state.running_var.value()[c];
      rm = momentum * rm + (T(1) - momentum) * mean[c];
      rv = momentum * rv + (T(1) - momentum) * var[c];
    }
    state.batches_seen.value()[0] += T(1);
  } else {
    if (state.batches_seen.value()[0] <= T(0))
      throw config_error("batch_norm: inference requested before running stats were populated");
    for (int c = 0; c < C; ++c) {
      mean[c] = state.running_mean.value()[c];
      inv_std[c] = T(1) / std::sqrt(state.running_var.value()[c] + zeta);
    }
  }
  for (size_t s = 0; s < spatial; ++s) {
    const T* row = xp + s * C;
    T* orow = yp + s * C;
    for (int c = 0; c < C; ++c) orow[c] = gam[c] * (row[c] - mean[c]) * inv_std[c] + bet[c];
  }

  auto xn = x.ptr();
  auto gn = state.gamma.ptr();
  auto bn = state.beta.ptr();
  return detail::make_op<T>(
      std::move(y), {xn, gn, bn},
      [xn, gn, bn, mean = std::move(mean), inv_std = std::move(inv_std), spatial, C,
       mode](Node<T>& self) {
        const T* gp = self.grad.data();
        const T* xp = xn->value.data();
        const T* gam = gn->value.data();

        std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));  // gx accumulates g * xhat
        for (size_t s = 0; s < spatial; ++s) {
          const T* grow = gp + s * C;
          const T* xrow = xp + s * C;
          for (int c = 0; c < C; ++c) {
            sum_g[c] += grow[c];
            sum_gx[c] += grow[c] * (xrow[c] - mean[c]) * inv_std[c];
          }
        }
        if (bn->requires_grad)
          for (int c = 0; c < C; ++c) bn->grad[c] += sum_g[c];
        if (gn->requires_grad)
          for (int c = 0; c < C; ++c) gn->grad[c] += sum_gx[c];
        if (!xn->requires_grad) return;

        T* dxp = xn->grad.data();
        if (mode == Mode::infer) {
          for (size_t s = 0; s < spatial; ++s)
            for (int c = 0; c < C; ++c) dxp[s * C + c] += gp[s * C + c] * gam[c] * inv_std[c];
          return;
        }
        const T invN = T(1) / static_cast<T>(spatial);
        for (size_t s = 0; s < spatial; ++s) {
          const T* grow = gp + s * C;
          const T* xrow = xp + s * C;
          T* dxrow = dxp + s * C;
          for (int c = 0; c < C; ++c) {
            const T xhat = (xrow[c] - mean[c]) * inv_std[c];
            dxrow[c] += gam[c] * inv_std[c] *
                        (grow[c] - invN * sum_g[c] - xhat * invN * sum_gx[c]);
          }
        }
      });
}

// ---- activations ---------------------------------------------------------

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T alpha) {
  if (alpha <= T(0) || alpha >= T(1)) throw config_error("leaky_relu: alpha must be in (0,1)");
  Tensor<T> y(x.shape());
  for (size_t i = 0; i < y.numel(); ++i) {
    const T v = x.value()[i];
    y[i] = v >= T(0) ? v : alpha * v;
  }
  auto xn = x.ptr();
  return detail::make_op<T>(std::move(y), {xn}, [xn, alpha](Node<T>& self) {
    for (size_t i = 0; i < self.grad.numel(); ++i)
      xn->grad[i] += self.grad[i] * (xn->value[i] >= T(0) ? T(1) : alpha);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y(x.shape());
  for (size_t i = 0; i < y.numel(); ++i) y[i] = std::max(T(0), x.value()[i]);
  auto xn = x.ptr();
  return detail::make_op<T>(std::move(y), {xn}, [xn](Node<T>& self) {
    for (size_t i = 0; i < self.grad.numel(); ++i)
      if (xn->value[i] > T(0)) xn->grad[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> y(x.shape());
  for (size_t i = 0; i < y.numel(); ++i) y[i] = T(1) / (T(1) + std::exp(-x.value()[i]));
  auto xn = x.ptr();
  return detail::make_op<T>(std::move(y), {xn}, [xn](Node<T>& self) {
    for (size_t i = 0; i < self.grad.numel(); ++i) {
      const T s = self.value[i];
      xn->grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

// ---- pooling and channel attention ----------------------------------------

enum class PoolKind { avg, max };

// Collapses the spatial extent to 1x1, per channel (per sample).
template <typename T>
Var<T> global_pool(PoolKind kind, const Var<T>& x) {
  const auto d = detail::img_dims(x.shape(), "global_pool input");
  Shape out_shape = d.batched ? Shape{d.b, 1, 1, d.c} : Shape{1, 1, d.c};
  Tensor<T> y(out_shape);
  const size_t hw = static_cast<size_t>(d.h) * d.w;
  const T* xp = x.value().data();
  std::vector<size_t> argmax;
  if (kind == PoolKind::max) argmax.assign(static_cast<size_t>(d.b) * d.c, 0);

  for (int bi = 0; bi < d.b; ++bi) {
    const T* xb = xp + static_cast<size_t>(bi) * hw * d.c;
    T* yb = y.data() + static_cast<size_t>(bi) * d.c;
    for (int c = 0; c < d.c; ++c) {
      if (kind == PoolKind::avg) {
        T acc = T(0);
        for (size_t s = 0; s < hw; ++s) acc += xb[s * d.c + c];
        yb[c] = acc / static_cast<T>(hw);
      } else {
        size_t best = 0;
        T mx = xb[c];
        for (size_t s = 1; s < hw; ++s) {
          const T v = xb[s * d.c + c];
          if (v > mx) {
            mx = v;
            best = s;
          }
        }
        yb[c] = mx;
        argmax[static_cast<size_t>(bi) * d.c + c] = best;
      }
    }
  }

  auto xn = x.ptr();
  return detail::make_op<T>(std::move(y), {xn},
                            [xn, d, hw, kind, argmax = std::move(argmax)](Node<T>& self) {
                              const T* gp = self.grad.data();
                              T* dxp = xn->grad.data();
                              for (int bi = 0; bi < d.b; ++bi) {
                                T* dxb = dxp + static_cast<size_t>(bi) * hw * d.c;
                                const T* gb = gp + static_cast<size_t>(bi) * d.c;
                                for (int c = 0; c < d.c; ++c) {
                                  if (kind == PoolKind::avg) {
                                    const T g = gb[c] / static_cast<T>(hw);
                                    for (size_t s = 0; s < hw; ++s) dxb[s * d.c + c] += g;
                                  } else {
                                    const size_t s = argmax[static_cast<size_t>(bi) * d.c + c];
                                    dxb[s * d.c + c] += gb[c];
                                  }
                                }
                              }
                            });
}

// Scales channel k of the image by weights[k]; weights are (B,)1x1xC and
// must match the image's batch form.
template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& w) {
  const auto d = detail::img_dims(x.shape(), "channel_scale input");
  const auto dw = detail::img_dims(w.shape(), "channel_scale weights");
  if (dw.h != 1 || dw.w != 1 || dw.c != d.c || dw.b != d.b)
    throw shape_error("channel_scale: weights must be (B,)1x1xC matching the image, got " +
                      shape_str(w.shape()) + " for image " + shape_str(x.shape()));
  const size_t hw = static_cast<size_t>(d.h) * d.w;
  Tensor<T> y(x.shape());
  const T* xp = x.value().data();
  const T* wp = w.value().data();
  for (int bi = 0; bi < d.b; ++bi) {
    const T* xb = xp + static_cast<size_t>(bi) * hw * d.c;
    const T* wb = wp + static_cast<size_t>(bi) * d.c;
    T* yb = y.data() + static_cast<size_t>(bi) * hw * d.c;
    for (size_t s = 0; s < hw; ++s)
      for (int c = 0; c < d.c; ++c) yb[s * d.c + c] = xb[s * d.c + c] * wb[c];
  }

  auto xn = x.ptr();
  auto wn = w.ptr();
  return detail::make_op<T>(std::move(y), {xn, wn}, [xn, wn, d, hw](Node<T>& self) {
    const T* gp = self.grad.data();
    for (int bi = 0; bi < d.b; ++bi) {
      const size_t img_off = static_cast<size_t>(bi) * hw * d.c;
      const size_t vec_off = static_cast<size_t>(bi) * d.c;
      for (size_t s = 0; s < hw; ++s)
        for (int c = 0; c < d.c; ++c) {
          const T g = gp[img_off + s * d.c + c];
          if (xn->requires_grad) xn->grad[img_off + s * d.c + c] += g * wn->value[vec_off + c];
          if (wn->requires_grad) wn->grad[vec_off + c] += g * xn->value[img_off + s * d.c + c];
        }
    }
  });
}

// Concatenates on the channel axis; channels of a precede channels of b.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto da = detail::img_dims(a.shape(), "concat lhs");
  const auto db = detail::img_dims(b.shape(), "concat rhs");
  if (da.b != db.b || da.h != db.h || da.w != db.w || da.batched != db.batched)
    throw shape_error("concat_channels: spatial/batch dims differ: " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
  const int cc = da.c + db.c;
  Shape out_shape = da.batched ? Shape{da.b, da.h, da.w, cc} : Shape{da.h, da.w, cc};
  Tensor<T> y(out_shape);
  const size_t pixels = static_cast<size_t>(da.b) * da.h * da.w;
  for (size_t s = 0; s < pixels; ++s) {
    T* yrow = y.data() + s * cc;
    const T* arow = a.value().data() + s * da.c;
    const T* brow = b.value().data() + s * db.c;
    std::copy(arow, arow + da.c, yrow);
    std::copy(brow, brow + db.c, yrow + da.c);
  }

  auto an = a.ptr();
  auto bn2 = b.ptr();
  return detail::make_op<T>(std::move(y), {an, bn2}, [an, bn2, pixels, da, db, cc](Node<T>& self) {
    const T* gp = self.grad.data();
    for (size_t s = 0; s < pixels; ++s) {
      const T* grow = gp + s * cc;
      if (an->requires_grad)
        for (int c = 0; c < da.c; ++c) an->grad[s * da.c + c] += grow[c];
      if (bn2->requires_grad)
        for (int c = 0; c < db.c; ++c) bn2->grad[s * db.c + c] += grow[da.c + c];
    }
  });
}

// ---- elementwise and scalar ------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value()))
    throw shape_error("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  Tensor<T> y(a.shape());
  for (size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
  auto an = a.ptr();
  auto bn = b.ptr();
  return detail::make_op<T>(std::move(y), {an, bn}, [an, bn](Node<T>& self) {
    for (size_t i = 0; i < self.grad.numel(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i];
      if (bn->requires_grad) bn->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value()))
    throw shape_error("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  Tensor<T> y(a.shape());
  for (size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
  auto an = a.ptr();
  auto bn = b.ptr();
  return detail::make_op<T>(std::move(y), {an, bn}, [an, bn](Node<T>& self) {
    for (size_t i = 0; i < self.grad.numel(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i] * bn->value[i];
      if (bn->requires_grad) bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

// y = s * x with a trainable scalar s (a 1-element tensor).
template <typename T>
Var<T> scale_by_scalar(const Var<T>& x, const Var<T>& s) {
  if (s.value().numel() != 1) throw shape_error("scale_by_scalar: s must hold a single value");
  Tensor<T> y(x.shape());
  const T sv = s.value()[0];
  for (size_t i = 0; i < y.numel(); ++i) y[i] = sv * x.value()[i];
  auto xn = x.ptr();
  auto sn = s.ptr();
  return detail::make_op<T>(std::move(y), {xn, sn}, [xn, sn](Node<T>& self) {
    const T sv = sn->value[0];
    for (size_t i = 0; i < self.grad.numel(); ++i) {
      if (xn->requires_grad) xn->grad[i] += self.grad[i] * sv;
      if (sn->requires_grad) sn->grad[0] += self.grad[i] * xn->value[i];
    }
  });
}

// View with a new shape; the element order is unchanged.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  auto xn = x.ptr();
  return detail::make_op<T>(std::move(y), {xn}, [xn](Node<T>& self) {
    for (size_t i = 0; i < self.grad.numel(); ++i) xn->grad[i] += self.grad[i];
  });
}

// (B,)HxWxC -> (B,)HWC row-major flatten.
template <typename T>
Var<T> flatten_image(const Var<T>& x) {
  const auto d = detail::img_dims(x.shape(), "flatten input");
  const int n = d.h * d.w * d.c;
  return reshape(x, d.batched ? Shape{d.b, n} : Shape{n});
}

// ---- loss ------------------------------------------------------------------

// Mean over samples of the squared Frobenius norm of (pred - target).
// Rank-2/4 tensors treat the leading dimension as the batch; rank-1/3 are a
// single sample.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  if (!pred.value().same_shape(target.value()))
    throw shape_error("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                      shape_str(target.shape()));
  const int rank = pred.value().rank();
  const int batch = (rank == 2 || rank == 4) ? pred.shape()[0] : 1;
  T acc = T(0);
  for (size_t i = 0; i < pred.value().numel(); ++i) {
    const T dlt = pred.value()[i] - target.value()[i];
    acc += dlt * dlt;
  }
  Tensor<T> y({1}, std::vector<T>{acc / static_cast<T>(batch)});
  auto pn = pred.ptr();
  auto tn = target.ptr();
  return detail::make_op<T>(std::move(y), {pn, tn}, [pn, tn, batch](Node<T>& self) {
    const T g = self.grad[0] * T(2) / static_cast<T>(batch);
    for (size_t i = 0; i < pn->value.numel(); ++i) {
      const T dlt = pn->value[i] - tn->value[i];
      if (pn->requires_grad) pn->grad[i] += g * dlt;
      if (tn->requires_grad) tn->grad[i] -= g * dlt;
    }
  });
}

}  // namespace duffin
