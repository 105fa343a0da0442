#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "duffin/rng.hpp"
#include "duffin/tensor.hpp"
#include "duffin/util.hpp"

namespace duffin {

using cplx = std::complex<double>;

// Dense row-major complex matrix. Spatial-frequency CSI stacks the
// conjugated per-subcarrier channel vectors as rows: H[n][m] = conj(h_n[m]).
struct CMat {
  int rows = 0;
  int cols = 0;
  std::vector<cplx> a;

  CMat() = default;
  CMat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c) {}

  cplx& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  const cplx& at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  double frob_norm_sq() const {
    double s = 0;
    for (const cplx& v : a) s += std::norm(v);
    return s;
  }
};

namespace detail {

// In-place DFT, radix-2 when the length is a power of two, direct
// summation otherwise. No scaling; callers apply the unitary factor.
inline void dft_inplace(std::vector<cplx>& x, bool inverse) {
  const size_t n = x.size();
  if (n < 2) return;
  const double sign = inverse ? 1.0 : -1.0;
  if ((n & (n - 1)) != 0) {
    std::vector<cplx> out(n);
    for (size_t k = 0; k < n; ++k) {
      cplx acc = 0;
      for (size_t t = 0; t < n; ++t)
        acc += x[t] * std::polar(1.0, sign * 2.0 * M_PI * double(k * t % n) / double(n));
      out[k] = acc;
    }
    x = std::move(out);
    return;
  }
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const cplx wl = std::polar(1.0, sign * 2.0 * M_PI / double(len));
    for (size_t i = 0; i < n; i += len) {
      cplx w = 1.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const cplx u = x[i + k];
        const cplx v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace detail

// Unitary transform of each column (length = rows).
inline void unitary_fft_columns(CMat& m, bool inverse) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.rows));
  std::vector<cplx> col(m.rows);
  for (int c = 0; c < m.cols; ++c) {
    for (int r = 0; r < m.rows; ++r) col[r] = m.at(r, c);
    detail::dft_inplace(col, inverse);
    for (int r = 0; r < m.rows; ++r) m.at(r, c) = col[r] * scale;
  }
}

// Unitary transform of each row (length = cols).
inline void unitary_fft_rows(CMat& m, bool inverse) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols));
  std::vector<cplx> row(m.cols);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) row[c] = m.at(r, c);
    detail::dft_inplace(row, inverse);
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = row[c] * scale;
  }
}

// H_d = F_c H F_t^H with unitary DFT matrices: forward transform down the
// subcarrier axis, inverse transform along the antenna axis.
inline CMat to_angular_delay(const CMat& h) {
  CMat out = h;
  unitary_fft_columns(out, false);
  unitary_fft_rows(out, true);
  return out;
}

inline CMat from_angular_delay(const CMat& hd) {
  CMat out = hd;
  unitary_fft_columns(out, true);
  unitary_fft_rows(out, false);
  return out;
}

// Keeps rows [offset, offset + ns).
inline CMat truncate(const CMat& hd, int ns, int offset) {
  if (offset < 0 || ns < 1 || offset + ns > hd.rows)
    throw config_error("truncate: rows [" + std::to_string(offset) + ", " +
                       std::to_string(offset + ns) + ") outside matrix with " +
                       std::to_string(hd.rows) + " rows");
  CMat out(ns, hd.cols);
  for (int r = 0; r < ns; ++r)
    for (int c = 0; c < hd.cols; ++c) out.at(r, c) = hd.at(offset + r, c);
  return out;
}

// ---- synthetic sparse-multipath scenario -----------------------------------

// Sparse multipath over a half-wavelength ULA: one dominant path in delay
// bin zero plus NLOS paths at integer delay bins inside the retained window,
// complex-Gaussian gains, uniform angles. Delays are specified directly in
// delay-bin units; the subcarrier spacing is abstracted away.
struct ScenarioConfig {
  int nc = 1024;
  int nt = 32;
  int ns = 32;
  int paths = 8;          // including the dominant path
  double kappa = 10.0;    // dominant power over mean NLOS path power
  int delay_span = 8;     // NLOS delay bins drawn from [0, delay_span)
  uint64_t seed = 1;

  void validate() const {
    if (nc < 1 || nt < 1 || ns < 1 || ns > nc) throw config_error("scenario: bad dimensions");
    if (paths < 1) throw config_error("scenario: at least one path required");
    if (kappa < 1.0) throw config_error("scenario: kappa must be >= 1");
    if (delay_span < 1 || delay_span > ns)
      throw config_error("scenario: delays must land inside the retained window");
  }
};

inline KvMap scenario_to_kv(const ScenarioConfig& c) {
  KvMap kv;
  kv["nc"] = std::to_string(c.nc);
  kv["nt"] = std::to_string(c.nt);
  kv["ns"] = std::to_string(c.ns);
  kv["paths"] = std::to_string(c.paths);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", c.kappa);
  kv["kappa"] = buf;
  kv["delay_span"] = std::to_string(c.delay_span);
  kv["seed"] = std::to_string(c.seed);
  return kv;
}

inline ScenarioConfig scenario_from_kv(const KvMap& kv) {
  ScenarioConfig c;
  c.nc = std::stoi(kv_get(kv, "nc"));
  c.nt = std::stoi(kv_get(kv, "nt"));
  c.ns = std::stoi(kv_get(kv, "ns"));
  c.paths = std::stoi(kv_get(kv, "paths"));
  c.kappa = std::stod(kv_get(kv, "kappa"));
  c.delay_span = std::stoi(kv_get(kv, "delay_span"));
  c.seed = std::stoull(kv_get(kv, "seed"));
  return c;
}

inline CMat generate_sample(const ScenarioConfig& cfg, uint64_t sample_seed) {
  Rng rng(sample_seed);
  struct Path {
    double gain_re, gain_im, sin_theta;
    int delay_bin;
  };
  std::vector<Path> paths(cfg.paths);
  for (int p = 0; p < cfg.paths; ++p) {
    const bool dominant = (p == 0);
    const double std_per_dim = std::sqrt((dominant ? cfg.kappa : 1.0) / 2.0);
    paths[p].gain_re = std_per_dim * rng.normal();
    paths[p].gain_im = std_per_dim * rng.normal();
    paths[p].sin_theta = rng.uniform(-1.0, 1.0);
    paths[p].delay_bin = dominant ? 0 : static_cast<int>(rng.below(cfg.delay_span));
  }
  CMat h(cfg.nc, cfg.nt);
  for (const Path& p : paths) {
    const cplx gain(p.gain_re, p.gain_im);
    for (int n = 0; n < cfg.nc; ++n) {
      const cplx delay_phase =
          std::polar(1.0, -2.0 * M_PI * double(n) * double(p.delay_bin) / double(cfg.nc));
      const cplx base = gain * delay_phase;
      for (int m = 0; m < cfg.nt; ++m) {
        const cplx steer = std::polar(1.0, M_PI * double(m) * p.sin_theta);
        h.at(n, m) += std::conj(base * steer);  // rows hold h_n^H
      }
    }
  }
  return h;
}

inline std::vector<CMat> generate_scenario(const ScenarioConfig& cfg, int n_samples) {
  cfg.validate();
  if (n_samples < 1) throw config_error("scenario: sample count must be positive");
  std::vector<CMat> out(n_samples);
  parallel_for(static_cast<size_t>(n_samples), [&](size_t i) {
    out[i] = generate_sample(cfg, Rng::derive_seed(cfg.seed, i));
  });
  return out;
}

// ---- normalization ---------------------------------------------------------

// x -> x/(2*scale) + 0.5 per real/imaginary channel; exact for |x| <= scale.
struct NormalizationMeta {
  double scale = 1.0;
};

inline Tensor<float> normalize(const CMat& hs, const NormalizationMeta& meta,
                               size_t* clipped = nullptr) {
  Tensor<float> img({hs.rows, hs.cols, 2});
  const double denom = 2.0 * meta.scale;
  for (int r = 0; r < hs.rows; ++r)
    for (int c = 0; c < hs.cols; ++c) {
      for (int ch = 0; ch < 2; ++ch) {
        const double v = ch == 0 ? hs.at(r, c).real() : hs.at(r, c).imag();
        double norm = v / denom + 0.5;
        if (norm < 0.0 || norm > 1.0) {
          if (clipped) ++*clipped;
          norm = std::clamp(norm, 0.0, 1.0);
        }
        img.at(r, c, ch) = static_cast<float>(norm);
      }
    }
  return img;
}

inline CMat denormalize(const Tensor<float>& img, const NormalizationMeta& meta) {
  if (img.rank() != 3 || img.dim(2) != 2)
    throw shape_error("denormalize: expected an (Ns,Nt,2) image, got " + shape_str(img.shape()));
  CMat hs(img.dim(0), img.dim(1));
  const double denom = 2.0 * meta.scale;
  for (int r = 0; r < hs.rows; ++r)
    for (int c = 0; c < hs.cols; ++c)
      hs.at(r, c) = cplx((img.at(r, c, 0) - 0.5f) * denom, (img.at(r, c, 1) - 0.5f) * denom);
  return hs;
}

inline double dataset_scale(const std::vector<CMat>& truncated) {
  double s = 0.0;
  for (const CMat& m : truncated)
    for (const cplx& v : m.a) s = std::max({s, std::abs(v.real()), std::abs(v.imag())});
  if (s <= 0.0) throw config_error("normalization: all-zero dataset");
  return s;
}

// Zero-pads the truncated rows back into an Nc-row matrix and inverts the
// angular-delay transform.
inline CMat reconstruct_full(const Tensor<float>& img, const NormalizationMeta& meta, int offset,
                             int nc) {
  CMat hs = denormalize(img, meta);
  if (offset < 0 || offset + hs.rows > nc)
    throw config_error("reconstruct_full: window outside the full matrix");
  CMat hd(nc, hs.cols);
  for (int r = 0; r < hs.rows; ++r)
    for (int c = 0; c < hs.cols; ++c) hd.at(offset + r, c) = hs.at(r, c);
  return from_angular_delay(hd);
}

// ---- metrics ----------------------------------------------------------------

// Mean over samples of |Hhat - H|^2 / |H|^2.
inline double nmse(const std::vector<CMat>& truth, const std::vector<CMat>& estimate) {
  if (truth.size() != estimate.size() || truth.empty())
    throw config_error("nmse: sample sets must be non-empty and matched");
  double acc = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].rows != estimate[i].rows || truth[i].cols != estimate[i].cols)
      throw shape_error("nmse: matrix shapes differ");
    const double denom = truth[i].frob_norm_sq();
    if (denom <= 0.0) throw config_error("nmse: zero-norm truth sample");
    double err = 0.0;
    for (size_t j = 0; j < truth[i].a.size(); ++j) err += std::norm(estimate[i].a[j] - truth[i].a[j]);
    acc += err / denom;
  }
  return acc / static_cast<double>(truth.size());
}

inline double nmse_db(double linear) {
  if (linear < 1e-10) return -100.0;  // reporting floor
  return 10.0 * std::log10(linear);
}

struct CosineSimilarity {
  double beta = 0.0;
  size_t skipped = 0;  // zero-norm subcarriers excluded from the mean
};

// Mean over subcarriers of |hhat_n^H h_n| / (|hhat_n| |h_n|), then over samples.
inline CosineSimilarity cosine_similarity(const std::vector<CMat>& truth,
                                          const std::vector<CMat>& estimate) {
  if (truth.size() != estimate.size() || truth.empty())
    throw config_error("cosine_similarity: sample sets must be non-empty and matched");
  CosineSimilarity out;
  double sample_acc = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const CMat& h = truth[i];
    const CMat& hh = estimate[i];
    if (h.rows != hh.rows || h.cols != hh.cols)
      throw shape_error("cosine_similarity: matrix shapes differ");
    double acc = 0.0;
    int counted = 0;
    for (int n = 0; n < h.rows; ++n) {
      cplx dot = 0.0;
      double nh = 0.0, nhh = 0.0;
      for (int m = 0; m < h.cols; ++m) {
        // rows store h_n^H; the conjugation cancels inside |.|
        dot += hh.at(n, m) * std::conj(h.at(n, m));
        nh += std::norm(h.at(n, m));
        nhh += std::norm(hh.at(n, m));
      }
      if (nh <= 0.0 || nhh <= 0.0) {
        ++out.skipped;
        continue;
      }
      acc += std::abs(dot) / std::sqrt(nh * nhh);
      ++counted;
    }
    sample_acc += counted > 0 ? acc / counted : 0.0;
  }
  out.beta = sample_acc / static_cast<double>(truth.size());
  return out;
}

}  // namespace duffin
