#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>

#include "duffin/model.hpp"
#include "duffin/quantizer.hpp"

// Model file format "DFCN1":
//   magic "DFCN", version byte 0x01,
//   u32le config length + UTF-8 key=value lines,
//   per parameter record (store order):
//     u16le name length + name, u8 rank, u32le dims, f32le values,
//   optional calibration record: tag 0x51, f32le qmin, f32le qmax, u8 bits.

namespace duffin {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline KvMap model_config_to_kv(const ModelConfig& c) {
  KvMap kv;
  kv["ns"] = std::to_string(c.ns);
  kv["nt"] = std::to_string(c.nt);
  kv["rho_num"] = std::to_string(c.rho_num);
  kv["rho_den"] = std::to_string(c.rho_den);
  kv["t"] = std::to_string(c.t);
  kv["l"] = std::to_string(c.l);
  kv["cascade"] = std::to_string(c.cascade);
  kv["alpha"] = detail::fmt_double(c.alpha);
  kv["zeta"] = detail::fmt_double(c.zeta);
  kv["omega_a_init"] = detail::fmt_double(c.omega_a_init);
  kv["omega_v_init"] = detail::fmt_double(c.omega_v_init);
  kv["decoder_fnet_channels"] = std::to_string(c.decoder_fnet_channels);
  kv["fusion"] = fusion_name(c.fusion);
  return kv;
}

inline ModelConfig model_config_from_kv(const KvMap& kv) {
  ModelConfig c;
  c.ns = std::stoi(kv_get(kv, "ns"));
  c.nt = std::stoi(kv_get(kv, "nt"));
  c.rho_num = std::stoi(kv_get(kv, "rho_num"));
  c.rho_den = std::stoi(kv_get(kv, "rho_den"));
  c.t = std::stoi(kv_get(kv, "t"));
  c.l = std::stoi(kv_get(kv, "l"));
  c.cascade = std::stoi(kv_get(kv, "cascade"));
  c.alpha = std::stod(kv_get(kv, "alpha"));
  c.zeta = std::stod(kv_get(kv, "zeta"));
  c.omega_a_init = std::stod(kv_get(kv, "omega_a_init"));
  c.omega_v_init = std::stod(kv_get(kv, "omega_v_init"));
  c.decoder_fnet_channels = std::stoi(kv_get(kv, "decoder_fnet_channels"));
  c.fusion = fusion_from_name(kv_get(kv, "fusion"));
  return c;
}

inline void save_model(const Model<float>& model, const std::string& path,
                       const std::optional<QuantizerCalibration>& cal = std::nullopt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  write_bytes(os, "DFCN", 4);
  write_le<uint8_t>(os, 0x01);
  const std::string cfg = kv_serialize(model_config_to_kv(model.config));
  write_le<uint32_t>(os, static_cast<uint32_t>(cfg.size()));
  write_bytes(os, cfg.data(), cfg.size());
  for (const auto& r : model.params.records()) {
    if (r.name.size() > 0xFFFF) throw io_error("parameter name too long");
    write_le<uint16_t>(os, static_cast<uint16_t>(r.name.size()));
    write_bytes(os, r.name.data(), r.name.size());
    write_le<uint8_t>(os, static_cast<uint8_t>(r.var.value().rank()));
    for (int d : r.var.value().shape()) write_le<uint32_t>(os, static_cast<uint32_t>(d));
    for (float v : r.var.value().vec()) write_le<float>(os, v);
  }
  if (cal) {
    cal->validate();
    write_le<uint8_t>(os, 0x51);
    write_le<float>(os, cal->qmin);
    write_le<float>(os, cal->qmax);
    write_le<uint8_t>(os, static_cast<uint8_t>(cal->bits));
  }
  os.flush();
  if (!os) throw io_error("write failed: " + path);
}

struct LoadedModel {
  Model<float> model;
  std::optional<QuantizerCalibration> calibration;
};

inline LoadedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open model file: " + path);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::string(magic, 4) != "DFCN") throw format_error("not a DFCN model file: " + path);
  if (read_le<uint8_t>(is) != 0x01) throw format_error("unsupported model file version");
  const uint32_t cfg_len = read_le<uint32_t>(is);
  std::string cfg(cfg_len, '\0');
  read_bytes(is, cfg.data(), cfg_len);
  ModelConfig config = model_config_from_kv(kv_parse(cfg));

  LoadedModel out{build_model<float>(config, 0), std::nullopt};
  for (auto& r : out.model.params.records()) {
    const uint16_t name_len = read_le<uint16_t>(is);
    std::string name(name_len, '\0');
    read_bytes(is, name.data(), name_len);
    if (name != r.name)
      throw format_error("parameter order mismatch: expected " + r.name + ", found " + name);
    const int rank = read_le<uint8_t>(is);
    Shape shape(rank);
    for (int i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_le<uint32_t>(is));
    if (shape != r.var.value().shape())
      throw shape_error("parameter " + name + " has shape " + shape_str(shape) +
                        ", config requires " + shape_str(r.var.value().shape()));
    for (float& v : r.var.value().vec()) v = read_le<float>(is);
  }
  if (is.peek() != EOF) {
    const uint8_t tag = read_le<uint8_t>(is);
    if (tag != 0x51) throw format_error("unknown trailing record tag in model file");
    QuantizerCalibration cal;
    cal.qmin = read_le<float>(is);
    cal.qmax = read_le<float>(is);
    cal.bits = read_le<uint8_t>(is);
    cal.validate();
    out.calibration = cal;
  }
  return out;
}

}  // namespace duffin
