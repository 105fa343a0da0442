// Command-line front end for dataset generation, training, evaluation,
// quantized retraining, transfer fine-tuning, BER simulation, feature-map
// export, fusion ablations, and truncation-offset sweeps.
//
// Exit codes: 0 success, 2 usage error, 3 missing/unreadable file,
// 4 configuration contradiction, 1 anything else.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>

#include "duffin/duffin.hpp"

using namespace duffin;
using nlohmann::json;

namespace {

struct ManifestWriter {
  std::string command;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write() const {
    if (outputs.empty()) return;
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream os(outputs.front() + ".manifest.json");
    if (!os) throw io_error("cannot write manifest next to " + outputs.front());
    os << m.dump(2) << "\n";
  }
};

std::pair<int, int> parse_rho(const std::string& text) {
  const auto slash = text.find('/');
  long long num = 0, den = 1;
  if (slash != std::string::npos) {
    num = std::stoll(text.substr(0, slash));
    den = std::stoll(text.substr(slash + 1));
  } else {
    // exact decimal -> rational over a power of ten
    const auto dot = text.find('.');
    if (dot == std::string::npos) {
      num = std::stoll(text);
    } else {
      const std::string frac = text.substr(dot + 1);
      num = std::stoll(text.substr(0, dot) + frac);
      for (size_t i = 0; i < frac.size(); ++i) den *= 10;
    }
  }
  if (num <= 0 || den <= 0) throw config_error("rho must be a positive ratio, got " + text);
  const long long g = std::gcd(num, den);
  num /= g;
  den /= g;
  if (num > den) throw config_error("rho must not exceed 1, got " + text);
  return {static_cast<int>(num), static_cast<int>(den)};
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_double_list(text)) out.push_back(static_cast<int>(v));
  return out;
}

Dataset load_dataset_checked(const std::string& path) {
  if (!std::filesystem::exists(path)) throw io_error("dataset file not found: " + path);
  return read_dataset(path);
}

LoadedModel load_model_checked(const std::string& path) {
  if (!std::filesystem::exists(path)) throw io_error("model file not found: " + path);
  return load_model(path);
}

void require_compatible(const Model<float>& model, const Dataset& ds) {
  if (model.config.ns != ds.scenario.ns || model.config.nt != ds.scenario.nt)
    throw config_error("model geometry " + std::to_string(model.config.ns) + "x" +
                       std::to_string(model.config.nt) + " does not match dataset " +
                       std::to_string(ds.scenario.ns) + "x" + std::to_string(ds.scenario.nt));
}

json train_summary(const Model<float>& model, const TrainResult& res, uint64_t seed) {
  auto [enc, dec] = model.param_count();
  json s;
  s["model_config"] = json::object();
  for (const auto& [k, v] : model_config_to_kv(model.config)) s["model_config"][k] = v;
  s["seed"] = seed;
  s["encoder_params"] = enc;
  s["decoder_params"] = dec;
  s["epochs_run"] = res.history.size();
  s["final_train_nmse_db"] = res.final_train_nmse_db;
  s["final_val_nmse_db"] = res.final_val_nmse_db;
  s["best_val_nmse_db"] = res.best_val_nmse_db;
  if (res.epochs_to_target) s["epochs_to_target"] = *res.epochs_to_target;
  s["wall_seconds"] = res.wall_seconds;
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << text;
  if (!os) throw io_error("write failed: " + path);
}

// reconstructed spatial-frequency channels for every sample in the dataset
std::vector<CMat> reconstruct_channel_set(const Model<float>& model, const Dataset& ds,
                                          const QuantizerCalibration* cal) {
  std::vector<int> idx(ds.count());
  std::iota(idx.begin(), idx.end(), 0);
  auto imgs = detail::reconstruct_images(model, ds, idx, 32, cal);
  std::vector<CMat> out;
  out.reserve(imgs.size());
  for (const auto& img : imgs)
    out.push_back(reconstruct_full(img, ds.meta, ds.offset, ds.scenario.nc));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Duffin-CsiNet CSI compression toolkit"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic CSI dataset");
  std::string gen_scenario = "indoor", gen_out;
  int gen_samples = 0, gen_offset = 0;
  uint64_t gen_seed = 1;
  int gen_nc = -1, gen_nt = -1, gen_ns = -1, gen_paths = -1, gen_span = -1;
  double gen_kappa = -1.0;
  gen->add_option("--scenario", gen_scenario, "indoor|outdoor preset");
  gen->add_option("--samples", gen_samples, "sample count")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output dataset file")->required();
  gen->add_option("--offset", gen_offset, "truncation offset");
  gen->add_option("--nc", gen_nc, "subcarriers");
  gen->add_option("--nt", gen_nt, "antennas");
  gen->add_option("--ns", gen_ns, "retained delay rows");
  gen->add_option("--paths", gen_paths, "multipath count");
  gen->add_option("--kappa", gen_kappa, "dominant-path power factor");
  gen->add_option("--delay-span", gen_span, "NLOS delay bins");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "Train a model from scratch");
  std::string tr_data, tr_out, tr_rho = "1/4", tr_fusion = "nn";
  int tr_epochs = 200, tr_batch = 32, tr_warmup = 30, tr_t = 64, tr_cascade = 2;
  uint64_t tr_seed = 1;
  double tr_val = 0.1;
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--rho", tr_rho, "compression ratio, e.g. 1/4 or 0.25");
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--seed", tr_seed);
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--batch", tr_batch);
  tr->add_option("--warmup", tr_warmup);
  tr->add_option("--val-split", tr_val);
  tr->add_option("--t", tr_t, "decoder feature channels");
  tr->add_option("--cascade", tr_cascade, "decoder DuffinNet count");
  tr->add_option("--fusion", tr_fusion, "nn|add|dot");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Evaluate a model on a dataset");
  std::string ev_model, ev_data, ev_out;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--out", ev_out, "optional JSON report");

  // ---- quantize-train ----
  auto* qt = app.add_subcommand("quantize-train", "Stage-two quantized retraining");
  std::string qt_model, qt_data, qt_out;
  int qt_bits = 4, qt_epochs = 40, qt_batch = 32, qt_warmup = 5;
  uint64_t qt_seed = 1;
  double qt_val = 0.1;
  qt->add_option("--model", qt_model)->required();
  qt->add_option("--data", qt_data)->required();
  qt->add_option("--bits", qt_bits)->required();
  qt->add_option("--epochs", qt_epochs);
  qt->add_option("--out", qt_out)->required();
  qt->add_option("--batch", qt_batch);
  qt->add_option("--warmup", qt_warmup);
  qt->add_option("--seed", qt_seed);
  qt->add_option("--val-split", qt_val);

  // ---- transfer ----
  auto* tf = app.add_subcommand("transfer", "Fine-tune a pretrained model on a new scenario");
  std::string tf_model, tf_data, tf_out;
  int tf_epochs = 40, tf_batch = 32, tf_warmup = 5;
  uint64_t tf_seed = 1;
  double tf_val = 0.1, tf_target = 0.0;
  bool tf_has_target = false;
  tf->add_option("--model", tf_model)->required();
  tf->add_option("--data", tf_data)->required();
  tf->add_option("--epochs", tf_epochs);
  tf->add_option("--out", tf_out)->required();
  tf->add_option("--batch", tf_batch);
  tf->add_option("--warmup", tf_warmup);
  tf->add_option("--seed", tf_seed);
  tf->add_option("--val-split", tf_val);
  auto* tgt_opt = tf->add_option("--target-nmse", tf_target,
                                 "record epochs until this NMSE (dB)");

  // ---- ber ----
  auto* ber = app.add_subcommand("ber", "Link-level BER with MRT beamforming");
  std::string ber_model, ber_data, ber_snrs = "0,5,10,15,20", ber_out;
  long ber_bits = 20000;
  uint64_t ber_seed = 1;
  ber->add_option("--model", ber_model)->required();
  ber->add_option("--data", ber_data)->required();
  ber->add_option("--snrs", ber_snrs, "comma-separated SNR list (dB)");
  ber->add_option("--bits", ber_bits, "bits per (SNR, source) point");
  ber->add_option("--out", ber_out, "output CSV")->required();
  ber->add_option("--seed", ber_seed);

  // ---- params ----
  auto* pc = app.add_subcommand("params", "Print trainable parameter counts");
  std::string pc_model;
  pc->add_option("--model", pc_model)->required();

  // ---- dump-features ----
  auto* df = app.add_subcommand("dump-features", "Export encoder feature maps as CSV");
  std::string df_model, df_data, df_out;
  int df_index = 0;
  df->add_option("--model", df_model)->required();
  df->add_option("--data", df_data)->required();
  df->add_option("--index", df_index, "sample index");
  df->add_option("--out", df_out)->required();

  // ---- ablate-fusion ----
  auto* ab = app.add_subcommand("ablate-fusion", "Train and evaluate one fusion variant");
  std::string ab_data, ab_mode = "nn", ab_rho = "1/4", ab_out;
  int ab_epochs = 80, ab_batch = 32, ab_warmup = 10, ab_t = 64, ab_cascade = 2;
  uint64_t ab_seed = 1;
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--rho", ab_rho);
  ab->add_option("--mode", ab_mode, "add|dot|nn")->required();
  ab->add_option("--epochs", ab_epochs);
  ab->add_option("--batch", ab_batch);
  ab->add_option("--warmup", ab_warmup);
  ab->add_option("--seed", ab_seed);
  ab->add_option("--t", ab_t);
  ab->add_option("--cascade", ab_cascade);
  ab->add_option("--out", ab_out, "optional model output");

  // ---- offset-sweep ----
  auto* osweep = app.add_subcommand("offset-sweep", "Cosine similarity of the window round trip");
  std::string os_data, os_offsets = "0,1,2,3,4", os_out;
  osweep->add_option("--data", os_data)->required();
  osweep->add_option("--offsets", os_offsets, "comma-separated offsets");
  osweep->add_option("--out", os_out, "optional output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) {
      ManifestWriter mf{"gen-data"};
      ScenarioConfig sc = scenario_preset(gen_scenario);
      if (gen_nc > 0) sc.nc = gen_nc;
      if (gen_nt > 0) sc.nt = gen_nt;
      if (gen_ns > 0) sc.ns = gen_ns;
      if (gen_paths > 0) sc.paths = gen_paths;
      if (gen_kappa > 0) sc.kappa = gen_kappa;
      if (gen_span > 0) sc.delay_span = gen_span;
      sc.seed = gen_seed;
      sc.validate();
      if (gen_samples < 1) throw config_error("--samples must be positive");
      Dataset ds = make_dataset(sc, gen_samples, gen_offset);
      write_dataset(ds, gen_out);
      for (const auto& [k, v] : scenario_to_kv(sc)) mf.config[k] = v;
      mf.config["samples"] = gen_samples;
      mf.config["offset"] = gen_offset;
      mf.config["scenario"] = gen_scenario;
      mf.outputs = {gen_out};
      mf.write();
      std::cout << "wrote " << gen_out << " (" << ds.count() << " samples, scale "
                << ds.meta.scale << ")\n";
    } else if (*tr) {
      ManifestWriter mf{"train"};
      Dataset ds = load_dataset_checked(tr_data);
      auto [num, den] = parse_rho(tr_rho);
      ModelConfig mc;
      mc.ns = ds.scenario.ns;
      mc.nt = ds.scenario.nt;
      mc.rho_num = num;
      mc.rho_den = den;
      mc.t = tr_t;
      mc.cascade = tr_cascade;
      mc.decoder_fnet_channels = tr_t;
      mc.fusion = fusion_from_name(tr_fusion);
      auto model = build_model<float>(mc, tr_seed);
      TrainConfig cfg;
      cfg.epochs = tr_epochs;
      cfg.batch_size = tr_batch;
      cfg.warmup_epochs = tr_warmup;
      cfg.seed = tr_seed;
      cfg.val_fraction = tr_val;
      TrainResult res = train(model, ds, cfg);
      save_model(model, tr_out);
      write_metrics_csv(res, tr_out + ".metrics.csv");
      write_text(tr_out + ".summary.json", train_summary(model, res, tr_seed).dump(2) + "\n");
      mf.config = {{"data", tr_data},     {"rho", tr_rho},     {"epochs", tr_epochs},
                   {"seed", tr_seed},     {"batch", tr_batch}, {"warmup", tr_warmup},
                   {"val_split", tr_val}, {"t", tr_t},         {"cascade", tr_cascade},
                   {"fusion", tr_fusion}};
      mf.inputs = {tr_data};
      mf.outputs = {tr_out, tr_out + ".metrics.csv", tr_out + ".summary.json"};
      mf.write();
      std::cout << "trained " << res.history.size() << " epochs; final val NMSE "
                << res.final_val_nmse_db << " dB\n";
    } else if (*ev) {
      Dataset ds = load_dataset_checked(ev_data);
      LoadedModel lm = load_model_checked(ev_model);
      require_compatible(lm.model, ds);
      const QuantizerCalibration* cal = lm.calibration ? &*lm.calibration : nullptr;
      EvalResult r = evaluate(lm.model, ds, cal);
      std::cout << "nmse_db=" << r.nmse_db << " beta=" << r.cosine
                << (cal ? " (quantized)" : "") << "\n";
      if (!ev_out.empty()) {
        ManifestWriter mf{"eval"};
        json j;
        j["nmse_db"] = r.nmse_db;
        j["nmse_linear"] = r.nmse_linear;
        j["beta"] = r.cosine;
        j["quantized"] = cal != nullptr;
        if (cal) j["feedback_bits"] = lm.model.config.codeword_len() * cal->bits;
        write_text(ev_out, j.dump(2) + "\n");
        mf.config = {{"model", ev_model}, {"data", ev_data}};
        mf.inputs = {ev_model, ev_data};
        mf.outputs = {ev_out};
        mf.write();
      }
    } else if (*qt) {
      ManifestWriter mf{"quantize-train"};
      Dataset ds = load_dataset_checked(qt_data);
      LoadedModel lm = load_model_checked(qt_model);
      require_compatible(lm.model, ds);
      TrainConfig cfg;
      cfg.epochs = qt_epochs;
      cfg.batch_size = qt_batch;
      cfg.warmup_epochs = qt_warmup;
      cfg.seed = qt_seed;
      cfg.val_fraction = qt_val;
      auto [res, cal] = train_quantized(lm.model, ds, qt_bits, cfg);
      save_model(lm.model, qt_out, cal);
      write_metrics_csv(res, qt_out + ".metrics.csv");
      json summary = train_summary(lm.model, res, qt_seed);
      summary["bits"] = qt_bits;
      summary["feedback_bits"] = lm.model.config.codeword_len() * qt_bits;
      summary["qmin"] = cal.qmin;
      summary["qmax"] = cal.qmax;
      write_text(qt_out + ".summary.json", summary.dump(2) + "\n");
      mf.config = {{"model", qt_model},   {"data", qt_data},   {"bits", qt_bits},
                   {"epochs", qt_epochs}, {"seed", qt_seed},   {"batch", qt_batch},
                   {"warmup", qt_warmup}, {"val_split", qt_val}};
      mf.inputs = {qt_model, qt_data};
      mf.outputs = {qt_out, qt_out + ".metrics.csv", qt_out + ".summary.json"};
      mf.write();
      std::cout << "retrained with " << qt_bits << "-bit quantization; final val NMSE "
                << res.final_val_nmse_db << " dB\n";
    } else if (*tf) {
      ManifestWriter mf{"transfer"};
      Dataset ds = load_dataset_checked(tf_data);
      LoadedModel lm = load_model_checked(tf_model);
      require_compatible(lm.model, ds);
      TrainConfig cfg;
      cfg.epochs = tf_epochs;
      cfg.batch_size = tf_batch;
      cfg.warmup_epochs = tf_warmup;
      cfg.seed = tf_seed;
      cfg.val_fraction = tf_val;
      if (!tgt_opt->empty()) cfg.target_nmse_db = tf_target;
      TrainResult res = transfer_finetune(lm.model, ds, cfg);
      save_model(lm.model, tf_out);
      write_metrics_csv(res, tf_out + ".metrics.csv");
      write_text(tf_out + ".summary.json", train_summary(lm.model, res, tf_seed).dump(2) + "\n");
      mf.config = {{"model", tf_model}, {"data", tf_data},   {"epochs", tf_epochs},
                   {"seed", tf_seed},   {"batch", tf_batch}, {"warmup", tf_warmup},
                   {"val_split", tf_val}};
      mf.inputs = {tf_model, tf_data};
      mf.outputs = {tf_out, tf_out + ".metrics.csv", tf_out + ".summary.json"};
      mf.write();
      std::cout << "fine-tuned " << res.history.size() << " epochs; final val NMSE "
                << res.final_val_nmse_db << " dB";
      if (res.epochs_to_target) std::cout << "; reached target at epoch " << *res.epochs_to_target;
      std::cout << "\n";
    } else if (*ber) {
      ManifestWriter mf{"ber"};
      Dataset ds = load_dataset_checked(ber_data);
      LoadedModel lm = load_model_checked(ber_model);
      require_compatible(lm.model, ds);
      const QuantizerCalibration* cal = lm.calibration ? &*lm.calibration : nullptr;
      auto truth = ds.regenerate_full();
      auto rec = reconstruct_channel_set(lm.model, ds, cal);
      LinkConfig cfg;
      cfg.snr_db = parse_double_list(ber_snrs);
      cfg.bits_per_point = ber_bits;
      cfg.seed = ber_seed;
      auto points = simulate_ber(truth, rec, cfg);
      std::ofstream osf(ber_out);
      if (!osf) throw io_error("cannot open for writing: " + ber_out);
      write_ber_csv(points, osf);
      osf.flush();
      mf.config = {{"model", ber_model}, {"data", ber_data}, {"snrs", ber_snrs},
                   {"bits", ber_bits},   {"seed", ber_seed}};
      mf.inputs = {ber_model, ber_data};
      mf.outputs = {ber_out};
      mf.write();
      std::cout << "wrote " << ber_out << "\n";
    } else if (*pc) {
      LoadedModel lm = load_model_checked(pc_model);
      auto [enc, dec] = lm.model.param_count();
      char line[128];
      std::snprintf(line, sizeof(line), "encoder_params=%zu (%.3fM)\ndecoder_params=%zu (%.3fM)\n",
                    enc, enc / 1e6, dec, dec / 1e6);
      std::cout << line;
    } else if (*df) {
      ManifestWriter mf{"dump-features"};
      Dataset ds = load_dataset_checked(df_data);
      LoadedModel lm = load_model_checked(df_model);
      require_compatible(lm.model, ds);
      if (df_index < 0 || df_index >= ds.count())
        throw config_error("--index out of range: dataset has " + std::to_string(ds.count()) +
                           " samples");
      Tensor<float> batch = ds.images[df_index].reshaped({1, ds.scenario.ns, ds.scenario.nt, 2});
      EncoderTrace<float> trace;
      lm.model.encode(Var<float>::leaf(std::move(batch), false), Mode::infer, &trace);
      std::ofstream osf(df_out);
      if (!osf) throw io_error("cannot open for writing: " + df_out);
      auto dump = [&](const char* name, const Tensor<float>& t) {
        const int h = t.shape()[1], w = t.shape()[2], c = t.shape()[3];
        for (int ch = 0; ch < c; ++ch) {
          osf << "# feature " << name << " channel " << ch << "\n";
          for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
              if (j) osf << ",";
              char num[32];
              std::snprintf(num, sizeof(num), "%.8g",
                            static_cast<double>(t[(static_cast<size_t>(i) * w + j) * c + ch]));
              osf << num;
            }
            osf << "\n";
          }
        }
      };
      dump("G", trace.conv_features.value());
      dump("S", trace.atten_features.value());
      dump("J", trace.fused.value());
      osf.flush();
      mf.config = {{"model", df_model}, {"data", df_data}, {"index", df_index}};
      mf.inputs = {df_model, df_data};
      mf.outputs = {df_out};
      mf.write();
      std::cout << "wrote " << df_out << "\n";
    } else if (*ab) {
      ManifestWriter mf{"ablate-fusion"};
      Dataset ds = load_dataset_checked(ab_data);
      auto [num, den] = parse_rho(ab_rho);
      ModelConfig mc;
      mc.ns = ds.scenario.ns;
      mc.nt = ds.scenario.nt;
      mc.rho_num = num;
      mc.rho_den = den;
      mc.t = ab_t;
      mc.cascade = ab_cascade;
      mc.decoder_fnet_channels = ab_t;
      mc.fusion = fusion_from_name(ab_mode);
      auto model = build_model<float>(mc, ab_seed);
      TrainConfig cfg;
      cfg.epochs = ab_epochs;
      cfg.batch_size = ab_batch;
      cfg.warmup_epochs = ab_warmup;
      cfg.seed = ab_seed;
      cfg.val_fraction = 0.0;
      TrainResult res = train(model, ds, cfg);
      auto [enc, dec] = model.param_count();
      std::cout << "fusion=" << ab_mode << " params=" << enc + dec
                << " train_nmse_db=" << res.final_train_nmse_db << "\n";
      if (!ab_out.empty()) {
        save_model(model, ab_out);
        write_metrics_csv(res, ab_out + ".metrics.csv");
        mf.config = {{"data", ab_data},     {"rho", ab_rho},   {"mode", ab_mode},
                     {"epochs", ab_epochs}, {"seed", ab_seed}, {"batch", ab_batch}};
        mf.inputs = {ab_data};
        mf.outputs = {ab_out, ab_out + ".metrics.csv"};
        mf.write();
      }
    } else if (*osweep) {
      Dataset ds = load_dataset_checked(os_data);
      auto offsets = parse_int_list(os_offsets);
      if (offsets.empty()) throw config_error("--offsets list is empty");
      auto full = ds.regenerate_full();
      std::string csv = "offset,beta\n";
      for (int offset : offsets) {
        std::vector<CMat> truncated, rec;
        for (const auto& h : full)
          truncated.push_back(truncate(to_angular_delay(h), ds.scenario.ns, offset));
        NormalizationMeta meta{dataset_scale(truncated)};
        for (const auto& hs : truncated)
          rec.push_back(reconstruct_full(normalize(hs, meta), meta, offset, ds.scenario.nc));
        auto cs = cosine_similarity(full, rec);
        char line[64];
        std::snprintf(line, sizeof(line), "%d,%.8f\n", offset, cs.beta);
        csv += line;
      }
      std::cout << csv;
      if (!os_out.empty()) {
        ManifestWriter mf{"offset-sweep"};
        write_text(os_out, csv);
        mf.config = {{"data", os_data}, {"offsets", os_offsets}};
        mf.inputs = {os_data};
        mf.outputs = {os_out};
        mf.write();
      }
    }
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
