#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "duffin/csi.hpp"

// Dataset file format "CSIDS1":
//   magic "CSIDS", version 0x01,
//   u32le n_samples, Nc, Nt, Ns, offset,
//   f32le normalization scale,
//   u32le config length + UTF-8 key=value generator config (with seed),
//   per sample Ns x Nt x 2 f32le, row-major channel-last.
// Only truncated normalized images are stored; full spatial-frequency
// channels are regenerable from the embedded generator config.

namespace duffin {

struct Dataset {
  std::vector<Tensor<float>> images;  // normalized (Ns,Nt,2)
  NormalizationMeta meta;
  ScenarioConfig scenario;
  int offset = 0;

  int count() const { return static_cast<int>(images.size()); }

  // Denormalized truncated matrices (the NMSE ground truth).
  std::vector<CMat> truncated_truth() const {
    std::vector<CMat> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(denormalize(img, meta));
    return out;
  }

  // Full spatial-frequency channels, regenerated from the stored seed.
  std::vector<CMat> regenerate_full() const { return generate_scenario(scenario, count()); }
};

inline Dataset make_dataset(const ScenarioConfig& scenario, int n_samples, int offset = 0) {
  scenario.validate();
  auto full = generate_scenario(scenario, n_samples);
  std::vector<CMat> truncated;
  truncated.reserve(full.size());
  for (const CMat& h : full) truncated.push_back(truncate(to_angular_delay(h), scenario.ns, offset));
  Dataset ds;
  ds.scenario = scenario;
  ds.offset = offset;
  ds.meta.scale = dataset_scale(truncated);
  ds.images.reserve(truncated.size());
  for (const CMat& hs : truncated) ds.images.push_back(normalize(hs, ds.meta));
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  write_bytes(os, "CSIDS", 5);
  write_le<uint8_t>(os, 0x01);
  write_le<uint32_t>(os, static_cast<uint32_t>(ds.images.size()));
  write_le<uint32_t>(os, static_cast<uint32_t>(ds.scenario.nc));
  write_le<uint32_t>(os, static_cast<uint32_t>(ds.scenario.nt));
  write_le<uint32_t>(os, static_cast<uint32_t>(ds.scenario.ns));
  write_le<uint32_t>(os, static_cast<uint32_t>(ds.offset));
  write_le<float>(os, static_cast<float>(ds.meta.scale));
  const std::string cfg = kv_serialize(scenario_to_kv(ds.scenario));
  write_le<uint32_t>(os, static_cast<uint32_t>(cfg.size()));
  write_bytes(os, cfg.data(), cfg.size());
  for (const auto& img : ds.images) {
    require_shape(img, {ds.scenario.ns, ds.scenario.nt, 2}, "dataset image");
    for (float v : img.vec()) write_le<float>(os, v);
  }
  os.flush();
  if (!os) throw io_error("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open dataset file: " + path);
  char magic[5];
  read_bytes(is, magic, 5);
  if (std::string(magic, 5) != "CSIDS") throw format_error("not a CSIDS dataset file: " + path);
  if (read_le<uint8_t>(is) != 0x01) throw format_error("unsupported dataset file version");
  const uint32_t n = read_le<uint32_t>(is);
  const uint32_t nc = read_le<uint32_t>(is);
  const uint32_t nt = read_le<uint32_t>(is);
  const uint32_t ns = read_le<uint32_t>(is);
  const uint32_t offset = read_le<uint32_t>(is);
  const float scale = read_le<float>(is);
  const uint32_t cfg_len = read_le<uint32_t>(is);
  std::string cfg(cfg_len, '\0');
  read_bytes(is, cfg.data(), cfg_len);

  Dataset ds;
  ds.scenario = scenario_from_kv(kv_parse(cfg));
  ds.offset = static_cast<int>(offset);
  ds.meta.scale = scale;
  if (ds.scenario.nc != static_cast<int>(nc) || ds.scenario.nt != static_cast<int>(nt) ||
      ds.scenario.ns != static_cast<int>(ns))
    throw format_error("dataset header disagrees with embedded generator config");
  ds.images.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Tensor<float> img({static_cast<int>(ns), static_cast<int>(nt), 2});
    for (float& v : img.vec()) v = read_le<float>(is);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

// Named generation presets used by the command-line tool.
inline ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig c;
  if (name == "indoor") {
    c.paths = 8;
    c.kappa = 10.0;
    c.delay_span = 8;
  } else if (name == "outdoor") {
    c.paths = 16;
    c.kappa = 4.0;
    c.delay_span = 24;
  } else {
    throw config_error("unknown scenario preset: " + name + " (expected indoor|outdoor)");
  }
  return c;
}

}  // namespace duffin
