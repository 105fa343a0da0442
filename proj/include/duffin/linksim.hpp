#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "duffin/csi.hpp"

namespace duffin {

// Unit-norm maximum-ratio-transmission beamformer along the estimated channel.
inline std::vector<cplx> mrt_precode(const std::vector<cplx>& h_hat) {
  double nrm = 0;
  for (const cplx& v : h_hat) nrm += std::norm(v);
  if (nrm <= 0.0) throw config_error("mrt_precode: zero channel estimate");
  nrm = std::sqrt(nrm);
  std::vector<cplx> v(h_hat.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = h_hat[i] / nrm;
  return v;
}

// Gray-mapped QPSK at unit average symbol energy: bit 0 selects the sign of
// the in-phase axis, bit 1 the quadrature axis.
inline std::vector<cplx> qpsk_map(const std::vector<int>& bits) {
  if (bits.size() % 2 != 0) throw config_error("qpsk_map: odd bit count");
  const double amp = 1.0 / std::sqrt(2.0);
  std::vector<cplx> out(bits.size() / 2);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = cplx(bits[2 * i] ? -amp : amp, bits[2 * i + 1] ? -amp : amp);
  return out;
}

// Coherent minimum-distance demapping given the known effective complex gain.
inline std::vector<int> qpsk_demap(const std::vector<cplx>& symbols, cplx gain) {
  std::vector<int> bits(symbols.size() * 2);
  for (size_t i = 0; i < symbols.size(); ++i) {
    const cplx r = symbols[i] * std::conj(gain);
    bits[2 * i] = r.real() < 0 ? 1 : 0;
    bits[2 * i + 1] = r.imag() < 0 ? 1 : 0;
  }
  return bits;
}

enum class BeamformerSource { perfect, reconstructed, random };

inline std::string beamformer_name(BeamformerSource s) {
  switch (s) {
    case BeamformerSource::perfect: return "perfect";
    case BeamformerSource::reconstructed: return "reconstructed";
    case BeamformerSource::random: return "random";
  }
  return "?";
}

struct LinkConfig {
  std::vector<double> snr_db;
  long bits_per_point = 20000;  // per (SNR, beamformer source)
  uint64_t seed = 1;

  void validate() const {
    if (snr_db.empty()) throw config_error("link: SNR list is empty");
    if (bits_per_point < 2) throw config_error("link: bit budget too small");
  }
};

struct BerPoint {
  double snr_db;
  BeamformerSource source;
  long bits;
  long errors;
  double ber() const { return static_cast<double>(errors) / static_cast<double>(bits); }
};

// QPSK over y_n = h_n^H v_n x_n + z_n with MRT beamforming and a receiver
// that knows the effective scalar gain. The sufficient statistic
// |g| x + z is simulated directly, so only the gain magnitude matters. The
// SNR axis is defined against unit symbol energy with the mean perfect-CSI
// beamforming gain as reference, shared by all three beamformer sources.
// Bit and noise draws are shared across sources and SNRs per symbol, which
// keeps the source orderings free of Monte-Carlo jitter wherever the gains
// dominate pointwise.
inline std::vector<BerPoint> simulate_ber(const std::vector<CMat>& truth,
                                          const std::vector<CMat>& reconstructed,
                                          const LinkConfig& cfg) {
  cfg.validate();
  if (truth.size() != reconstructed.size() || truth.empty())
    throw config_error("link: truth/reconstructed sample sets must be non-empty and matched");
  const int n_samples = static_cast<int>(truth.size());
  const int nc = truth[0].rows;
  const int nt = truth[0].cols;

  // reference beamforming power: E{ |h^H v_perfect|^2 } = E{ ||h||^2 }
  double ref_gain = 0;
  for (const CMat& h : truth) ref_gain += h.frob_norm_sq();
  ref_gain /= static_cast<double>(n_samples) * nc;
  if (ref_gain <= 0) throw config_error("link: zero-energy channel set");

  const int n_snr = static_cast<int>(cfg.snr_db.size());
  std::vector<double> sigma(n_snr);
  for (int s = 0; s < n_snr; ++s)
    sigma[s] = std::sqrt(ref_gain / std::pow(10.0, cfg.snr_db[s] / 10.0));

  const long symbols_total = (cfg.bits_per_point + 1) / 2;
  const long sym_per_sample = (symbols_total + n_samples - 1) / n_samples;

  constexpr int kSources = 3;
  std::vector<std::array<long, kSources>> errors(n_snr, {0, 0, 0});
  std::vector<std::array<long, kSources>> bits(n_snr, {0, 0, 0});
  std::vector<std::vector<std::array<long, kSources>>> err_local(
      truth.size(), std::vector<std::array<long, kSources>>(n_snr, {0, 0, 0}));
  std::vector<std::vector<std::array<long, kSources>>> bit_local = err_local;

  parallel_for(truth.size(), [&](size_t si) {
    const CMat& h = truth[si];
    const CMat& hh = reconstructed[si];
    if (h.rows != nc || hh.rows != nc || h.cols != nt || hh.cols != nt)
      throw shape_error("link: inconsistent matrix sizes in the sample sets");
    Rng rng(Rng::derive_seed(cfg.seed, si));

    std::vector<cplx> v_rand(nt);
    for (cplx& v : v_rand) v = cplx(rng.normal(), rng.normal());
    v_rand = mrt_precode(v_rand);  // random unit beam, independent of h

    // effective |gain| per subcarrier per source; rows hold h_n^H so the
    // beamformed gain is the plain row-vector product
    std::vector<std::array<double, kSources>> gain(nc);
    for (int n = 0; n < nc; ++n) {
      std::vector<cplx> hn(nt), hhn(nt);
      double hn_norm = 0;
      for (int m = 0; m < nt; ++m) {
        hn[m] = std::conj(h.at(n, m));
        hhn[m] = std::conj(hh.at(n, m));
        hn_norm += std::norm(hn[m]);
      }
      gain[n][0] = std::sqrt(hn_norm);  // perfect MRT: |h^H h/||h||| = ||h||
      cplx g_rec = 0, g_rnd = 0;
      double hh_norm = 0;
      for (int m = 0; m < nt; ++m) hh_norm += std::norm(hhn[m]);
      if (hh_norm > 0) {
        auto v_rec = mrt_precode(hhn);
        for (int m = 0; m < nt; ++m) g_rec += h.at(n, m) * v_rec[m];
      }
      for (int m = 0; m < nt; ++m) g_rnd += h.at(n, m) * v_rand[m];
      gain[n][1] = std::abs(g_rec);
      gain[n][2] = std::abs(g_rnd);
    }

    const double amp = 1.0 / std::sqrt(2.0);
    for (long k = 0; k < sym_per_sample; ++k) {
      const int n = static_cast<int>(rng.below(static_cast<uint64_t>(nc)));
      const uint64_t random_bits = rng.next_u64();
      const double sign_i = (random_bits & 1) ? -1.0 : 1.0;
      const double sign_q = (random_bits & 2) ? -1.0 : 1.0;
      const double u_re = rng.normal() / std::sqrt(2.0);  // unit-variance complex noise
      const double u_im = rng.normal() / std::sqrt(2.0);
      for (int s = 0; s < n_snr; ++s) {
        for (int src = 0; src < kSources; ++src) {
          const double g = gain[n][src];
          // matched-filter statistic: |g| * x + sigma * u
          const double r_i = g * sign_i * amp + sigma[s] * u_re;
          const double r_q = g * sign_q * amp + sigma[s] * u_im;
          long e = 0;
          if ((r_i < 0) != (sign_i < 0)) ++e;
          if ((r_q < 0) != (sign_q < 0)) ++e;
          err_local[si][s][src] += e;
          bit_local[si][s][src] += 2;
        }
      }
    }
  });

  for (size_t si = 0; si < truth.size(); ++si)
    for (int s = 0; s < n_snr; ++s)
      for (int src = 0; src < kSources; ++src) {
        errors[s][src] += err_local[si][s][src];
        bits[s][src] += bit_local[si][s][src];
      }

  std::vector<BerPoint> out;
  for (int s = 0; s < n_snr; ++s)
    for (int src = 0; src < kSources; ++src)
      out.push_back({cfg.snr_db[s], static_cast<BeamformerSource>(src), bits[s][src],
                     errors[s][src]});
  return out;
}

// Gaussian tail function, the closed-form QPSK reference.
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Closed-form perfect-CSI QPSK BER at the simulator's SNR convention.
inline double perfect_csi_ber(const std::vector<CMat>& truth, double snr_db) {
  double ref_gain = 0;
  for (const CMat& h : truth) ref_gain += h.frob_norm_sq();
  const int nc = truth[0].rows;
  ref_gain /= static_cast<double>(truth.size()) * nc;
  const double sigma = std::sqrt(ref_gain / std::pow(10.0, snr_db / 10.0));
  double acc = 0;
  long count = 0;
  for (const CMat& h : truth)
    for (int n = 0; n < nc; ++n) {
      double norm2 = 0;
      for (int m = 0; m < h.cols; ++m) norm2 += std::norm(h.at(n, m));
      acc += q_function(std::sqrt(norm2) / sigma);
      ++count;
    }
  return acc / static_cast<double>(count);
}

inline void write_ber_csv(const std::vector<BerPoint>& points, std::ostream& os) {
  os << "snr_db,source,bits,errors,ber\n";
  char line[128];
  for (const auto& p : points) {
    std::snprintf(line, sizeof(line), "%.4g,%s,%ld,%ld,%.8g\n", p.snr_db,
                  beamformer_name(p.source).c_str(), p.bits, p.errors, p.ber());
    os << line;
  }
}

}  // namespace duffin
