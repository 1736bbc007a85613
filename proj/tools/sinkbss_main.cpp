// Command-line front end: mixture synthesis, separation, scoring and
// spectral diagnostics. Every subcommand is a thin shell over the library.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "bss/audio_io.hpp"
#include "bss/csv.hpp"
#include "bss/evaluation.hpp"
#include "bss/mixsim.hpp"
#include "bss/separation.hpp"
#include "bss/stft.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string method = "auxiva";
  int iters = 100;
  int bases = 10;
  std::uint64_t seed = 0;
  int ref_channel = 0;
  int threads = 0;
  bss::StftConfig stft;
  bss::SinkhornParams sinkhorn;
  std::string input;
  std::string out;
};

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError("unknown key \"" + item.key() + "\" in " + where);
}

template <typename T>
void load(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

RunConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  check_keys(j, {"method", "iters", "bases", "seed", "ref_channel", "threads",
                 "stft", "sinkhorn", "input", "out"},
             path.string());
  RunConfig cfg;
  load(j, "method", cfg.method);
  load(j, "iters", cfg.iters);
  load(j, "bases", cfg.bases);
  load(j, "seed", cfg.seed);
  load(j, "ref_channel", cfg.ref_channel);
  load(j, "threads", cfg.threads);
  load(j, "input", cfg.input);
  load(j, "out", cfg.out);
  if (j.contains("stft")) {
    const json& s = j.at("stft");
    check_keys(s, {"frame_len", "hop", "fft_len", "window"}, "stft");
    load(s, "frame_len", cfg.stft.frame_len);
    load(s, "hop", cfg.stft.hop);
    load(s, "fft_len", cfg.stft.fft_len);
    if (s.contains("window")) {
      const auto w = s.at("window").get<std::string>();
      if (w != "hamming") throw ConfigError("unknown window \"" + w + "\"");
    }
  }
  if (j.contains("sinkhorn")) {
    const json& s = j.at("sinkhorn");
    check_keys(s, {"lambda", "gamma", "inner_iters", "eps_floor",
                   "normalize_scale", "r"},
               "sinkhorn");
    load(s, "lambda", cfg.sinkhorn.lambda);
    load(s, "gamma", cfg.sinkhorn.gamma);
    load(s, "inner_iters", cfg.sinkhorn.inner_iters);
    load(s, "eps_floor", cfg.sinkhorn.eps_floor);
    load(s, "normalize_scale", cfg.sinkhorn.normalize_scale);
    load(s, "r", cfg.sinkhorn.r);
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["method"] = cfg.method;
  j["iters"] = cfg.iters;
  j["bases"] = cfg.bases;
  j["seed"] = cfg.seed;
  j["ref_channel"] = cfg.ref_channel;
  j["threads"] = cfg.threads;
  j["stft"] = {{"frame_len", cfg.stft.frame_len},
               {"hop", cfg.stft.hop},
               {"fft_len", cfg.stft.fft_len},
               {"window", "hamming"}};
  j["sinkhorn"] = {{"lambda", cfg.sinkhorn.lambda},
                   {"gamma", cfg.sinkhorn.gamma},
                   {"inner_iters", cfg.sinkhorn.inner_iters},
                   {"eps_floor", cfg.sinkhorn.eps_floor},
                   {"normalize_scale", cfg.sinkhorn.normalize_scale},
                   {"r", cfg.sinkhorn.r}};
  j["input"] = cfg.input;
  j["out"] = cfg.out;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::vector<fs::path> wav_files_in(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------- mix

struct MixArgs {
  std::vector<std::string> sources;
  std::vector<std::string> rirs;
  bool synthetic = false;
  double t60 = 0.05;
  int rir_taps = 0;  // 0: derived from t60
  std::uint64_t seed = 0;
  int ref_channel = 0;
  std::string out;
};

int run_mix(const MixArgs& args) {
  const int n_sources = static_cast<int>(args.sources.size());
  if (args.synthetic == !args.rirs.empty())
    throw ConfigError("choose exactly one of --rirs and --synthetic");

  bss::AudioBuffer sources;
  std::size_t min_len = SIZE_MAX;
  for (const auto& path : args.sources) {
    bss::AudioBuffer s = bss::read_wav(path);
    if (s.num_channels() != 1)
      throw std::runtime_error("source " + path + " must be mono");
    if (sources.samples.empty()) sources.sample_rate = s.sample_rate;
    else if (s.sample_rate != sources.sample_rate)
      throw std::runtime_error("sources have mismatched sample rates; not resampling");
    min_len = std::min(min_len, s.num_samples());
    sources.samples.push_back(std::move(s.samples[0]));
  }
  for (auto& ch : sources.samples) ch.resize(min_len);

  bss::RirBank bank;
  if (args.synthetic) {
    int taps = args.rir_taps;
    if (taps <= 0)
      taps = std::max(64, static_cast<int>(args.t60 * sources.sample_rate) +
                              8 + 8 * n_sources + 1);
    bank = bss::RirBank::synthetic(args.seed, n_sources, n_sources, taps,
                                   args.t60, sources.sample_rate);
  } else {
    if (static_cast<int>(args.rirs.size()) != n_sources)
      throw std::runtime_error("need one impulse-response file per source");
    std::vector<bss::AudioBuffer> banks;
    for (const auto& path : args.rirs) banks.push_back(bss::read_wav(path));
    const int mics = static_cast<int>(banks.front().num_channels());
    bank.sample_rate = sources.sample_rate;
    bank.h.resize(mics);
    for (int m = 0; m < mics; ++m)
      for (int n = 0; n < n_sources; ++n) {
        const auto& b = banks[n];
        if (static_cast<int>(b.num_channels()) != mics)
          throw std::runtime_error("impulse-response files disagree on channel count");
        bank.h[m].push_back(Eigen::Map<const Eigen::VectorXd>(
            b.samples[m].data(), b.num_samples()));
      }
    bank.validate();
  }
  if (args.ref_channel < 0 || args.ref_channel >= bank.mics())
    throw std::runtime_error("reference channel out of range");

  const bss::AudioBuffer mix = bss::convolve_mix(sources, bank);
  fs::create_directories(args.out);
  bss::write_wav(fs::path(args.out) / "mix.wav", mix, bss::WavEncoding::float32);

  // Per-source images at the reference channel, for later scoring.
  for (int n = 0; n < n_sources; ++n) {
    bss::AudioBuffer one;
    one.sample_rate = sources.sample_rate;
    one.samples = {sources.samples[n]};
    bss::RirBank single;
    single.sample_rate = bank.sample_rate;
    single.h = {{bank.h[args.ref_channel][n]}};
    const bss::AudioBuffer image = bss::convolve_mix(one, single);
    bss::write_wav(fs::path(args.out) / ("ref_" + std::to_string(n + 1) + ".wav"),
                   image, bss::WavEncoding::float32);
  }

  json manifest;
  manifest["command"] = "mix";
  manifest["sources"] = args.sources;
  manifest["sample_rate"] = sources.sample_rate;
  manifest["samples"] = min_len;
  manifest["mics"] = bank.mics();
  manifest["ref_channel"] = args.ref_channel;
  if (args.synthetic) {
    manifest["rirs"] = "synthetic";
    manifest["t60"] = args.t60;
    manifest["rir_taps"] = bank.taps();
    manifest["seed"] = args.seed;
  } else {
    manifest["rirs"] = args.rirs;
  }
  write_text(fs::path(args.out) / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

// ----------------------------------------------------------- separate

int run_separate(const RunConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("separate: --input is required");
  if (cfg.out.empty()) throw ConfigError("separate: --out is required");

  const bss::AudioBuffer mix = bss::read_wav(cfg.input);
  if (mix.num_channels() < 2)
    throw std::runtime_error("separation needs at least 2 channels, got " +
                             std::to_string(mix.num_channels()));

  bss::SeparationConfig sep;
  sep.method = bss::method_from_string(cfg.method);
  sep.iters = cfg.iters;
  sep.nmf_order = cfg.bases;
  sep.sinkhorn = cfg.sinkhorn;
  sep.seed = cfg.seed;
  sep.reference_channel = cfg.ref_channel;
  sep.threads = cfg.threads;
  sep.validate();
  if (sep.reference_channel >= static_cast<int>(mix.num_channels()))
    throw std::runtime_error("reference channel out of range");

  const bss::ComplexSpectrogram x = bss::analyze(mix, cfg.stft);
  const bss::SeparationResult result = bss::run_separation(x, sep);
  const bss::ComplexSpectrogram projected =
      bss::project_back(result.estimates, result.demixing, sep.reference_channel);
  bss::AudioBuffer estimates = bss::synthesize(projected);
  for (auto& ch : estimates.samples) ch.resize(mix.num_samples(), 0.0);

  fs::create_directories(cfg.out);
  for (std::size_t n = 0; n < estimates.num_channels(); ++n) {
    bss::AudioBuffer one;
    one.sample_rate = estimates.sample_rate;
    one.samples = {estimates.samples[n]};
    bss::write_wav(fs::path(cfg.out) / ("est_" + std::to_string(n + 1) + ".wav"),
                   one, bss::WavEncoding::float32);
  }

  std::ofstream trace_file(fs::path(cfg.out) / "trace.csv",
                           std::ios::binary | std::ios::trunc);
  bss::CsvWriter csv(trace_file);
  csv.row({"iteration", "surrogate_objective", "wall_ms"});
  for (std::size_t i = 0; i < result.trace.size(); ++i)
    csv.row({bss::CsvWriter::num(static_cast<long long>(i + 1)),
             bss::CsvWriter::num(result.trace[i].surrogate),
             bss::CsvWriter::num(result.trace[i].wall_ms)});

  write_text(fs::path(cfg.out) / "resolved_config.json",
             to_json(cfg).dump(2) + "\n");
  return 0;
}

// ----------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string est_dir, refs_dir, mix, out;
  int mix_channel = 0;
  int proj_len = 512;
};

int run_evaluate(const EvaluateArgs& args) {
  auto est_files = wav_files_in(args.est_dir);
  est_files.erase(std::remove_if(est_files.begin(), est_files.end(),
                                 [](const fs::path& p) {
                                   const auto name = p.filename().string();
                                   return name == "mix.wav";
                                 }),
                  est_files.end());
  auto ref_files = wav_files_in(args.refs_dir);
  // the mixture and manifest often sit next to the reference images
  ref_files.erase(std::remove_if(ref_files.begin(), ref_files.end(),
                                 [](const fs::path& p) {
                                   const auto name = p.filename().string();
                                   return name == "mix.wav";
                                 }),
                  ref_files.end());
  if (est_files.empty()) throw std::runtime_error("no estimate wavs found");
  if (est_files.size() != ref_files.size())
    throw std::runtime_error("estimate/reference count mismatch: " +
                             std::to_string(est_files.size()) + " vs " +
                             std::to_string(ref_files.size()));

  bss::AudioBuffer ests, refs;
  for (const auto& p : est_files) {
    bss::AudioBuffer b = bss::read_wav(p);
    if (b.num_channels() != 1)
      throw std::runtime_error("estimate " + p.string() + " must be mono");
    if (ests.samples.empty()) ests.sample_rate = b.sample_rate;
    ests.samples.push_back(std::move(b.samples[0]));
  }
  for (const auto& p : ref_files) {
    bss::AudioBuffer b = bss::read_wav(p);
    if (b.num_channels() != 1)
      throw std::runtime_error("reference " + p.string() + " must be mono");
    if (refs.samples.empty()) refs.sample_rate = b.sample_rate;
    refs.samples.push_back(std::move(b.samples[0]));
  }
  const bss::AudioBuffer mix = bss::read_wav(args.mix);
  if (args.mix_channel < 0 ||
      args.mix_channel >= static_cast<int>(mix.num_channels()))
    throw std::runtime_error("mixture channel out of range");
  if (ests.sample_rate != refs.sample_rate ||
      mix.sample_rate != ests.sample_rate)
    throw std::runtime_error("sample rates differ; not resampling");
  const Eigen::VectorXd mix_ref = Eigen::Map<const Eigen::VectorXd>(
      mix.samples[args.mix_channel].data(), mix.num_samples());

  const bss::EvalReport report =
      bss::evaluate(ests, refs, mix_ref, args.proj_len);

  std::ofstream out(args.out, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + args.out);
  bss::CsvWriter csv(out);
  csv.row({"source", "permuted_to", "sdr_db", "sir_db", "sar_db",
           "delta_sdr_db", "delta_sir_db", "delta_sar_db"});
  for (const auto& row : report.rows)
    csv.row({bss::CsvWriter::num(static_cast<long long>(row.source)),
             bss::CsvWriter::num(static_cast<long long>(row.permuted_to)),
             bss::CsvWriter::num(row.metrics.sdr),
             bss::CsvWriter::num(row.metrics.sir),
             bss::CsvWriter::num(row.metrics.sar),
             bss::CsvWriter::num(row.delta.sdr),
             bss::CsvWriter::num(row.delta.sir),
             bss::CsvWriter::num(row.delta.sar)});
  return 0;
}

// --------------------------------------------------------------- hist

struct HistArgs {
  std::string input, mode = "hist", out;
  int bins = 100;
  bool per_band = false;
  bss::StftConfig stft;
};

int run_hist(const HistArgs& args) {
  const bss::AudioBuffer buf = bss::read_wav(args.input);
  std::ofstream out(args.out, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + args.out);
  bss::CsvWriter csv(out);

  if (args.mode == "hist") {
    const bss::SpectralHistogram hist =
        bss::spectral_histogram(buf, args.stft, args.bins, args.per_band);
    if (hist.per_band) {
      csv.row({"bin_left", "bin_right", "probability", "freq_bin"});
      for (const auto& row : hist.rows)
        csv.row({bss::CsvWriter::num(row.bin_left),
                 bss::CsvWriter::num(row.bin_right),
                 bss::CsvWriter::num(row.probability),
                 bss::CsvWriter::num(static_cast<long long>(row.freq_bin))});
    } else {
      csv.row({"bin_left", "bin_right", "probability"});
      for (const auto& row : hist.rows)
        csv.row({bss::CsvWriter::num(row.bin_left),
                 bss::CsvWriter::num(row.bin_right),
                 bss::CsvWriter::num(row.probability)});
    }
  } else {
    const Eigen::MatrixXd rho = bss::interband_correlation(buf, args.stft);
    csv.row({"f", "f_prime", "correlation"});
    for (Eigen::Index f = 0; f < rho.rows(); ++f)
      for (Eigen::Index fp = 0; fp < rho.cols(); ++fp)
        csv.row({bss::CsvWriter::num(static_cast<long long>(f)),
                 bss::CsvWriter::num(static_cast<long long>(fp)),
                 bss::CsvWriter::num(rho(f, fp))});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"determined blind source separation with transport-based "
               "source power re-allocation"};
  app.require_subcommand(1);

  MixArgs mix_args;
  CLI::App* mix = app.add_subcommand(
      "mix", "render a convolutive mixture plus reference images");
  mix->add_option("--sources", mix_args.sources, "mono source wav files")
      ->required();
  mix->add_option("--rirs", mix_args.rirs,
                  "impulse-response banks, one M-channel wav per source");
  mix->add_flag("--synthetic", mix_args.synthetic,
                "use seeded exponential-decay impulse responses");
  mix->add_option("--t60", mix_args.t60, "synthetic decay time in seconds");
  mix->add_option("--rir-taps", mix_args.rir_taps,
                  "synthetic response length (default: derived from --t60)");
  mix->add_option("--seed", mix_args.seed, "random seed");
  mix->add_option("--ref-channel", mix_args.ref_channel,
                  "microphone used for reference images");
  mix->add_option("--out", mix_args.out, "output directory")->required();

  RunConfig sep_cfg;
  std::string config_path;
  CLI::App* sep = app.add_subcommand("separate", "run source separation");
  CLI::Option* input_opt =
      sep->add_option("--input", sep_cfg.input, "multichannel mixture wav");
  sep->add_option("--config", config_path, "JSON run configuration");
  CLI::Option* method_opt =
      sep->add_option("--method", sep_cfg.method, "separation method")
          ->check(CLI::IsMember({"auxiva", "siva", "ilrma", "silrma"}));
  CLI::Option* iters_opt = sep->add_option("--iters", sep_cfg.iters, "iterations");
  CLI::Option* bases_opt =
      sep->add_option("--bases", sep_cfg.bases, "low-rank model order");
  CLI::Option* lambda_opt = sep->add_option("--lambda", sep_cfg.sinkhorn.lambda,
                                            "inverse entropic temperature");
  CLI::Option* gamma_opt = sep->add_option("--gamma", sep_cfg.sinkhorn.gamma,
                                           "marginal relaxation weight");
  CLI::Option* sit_opt =
      sep->add_option("--sinkhorn-iters", sep_cfg.sinkhorn.inner_iters,
                      "transport fixed-point iterations");
  CLI::Option* seed_opt = sep->add_option("--seed", sep_cfg.seed, "random seed");
  CLI::Option* ref_opt = sep->add_option("--ref-channel", sep_cfg.ref_channel,
                                         "projection-back reference channel");
  CLI::Option* threads_opt =
      sep->add_option("--threads", sep_cfg.threads, "worker cap (1 = sequential)");
  CLI::Option* out_opt = sep->add_option("--out", sep_cfg.out, "output directory");
  bss::StftConfig stft_flags;
  CLI::Option* frame_opt =
      sep->add_option("--frame", stft_flags.frame_len, "analysis frame length");
  CLI::Option* hop_opt = sep->add_option("--hop", stft_flags.hop, "frame hop");
  CLI::Option* fft_opt = sep->add_option("--fft", stft_flags.fft_len, "FFT length");

  EvaluateArgs eval_args;
  CLI::App* eval = app.add_subcommand("evaluate", "score estimates (SDR/SIR/SAR)");
  eval->add_option("--est", eval_args.est_dir, "directory of estimate wavs")
      ->required();
  eval->add_option("--refs", eval_args.refs_dir, "directory of reference wavs")
      ->required();
  eval->add_option("--mix", eval_args.mix, "mixture wav for score deltas")
      ->required();
  eval->add_option("--mix-channel", eval_args.mix_channel, "mixture channel");
  eval->add_option("--proj-len", eval_args.proj_len, "projection filter taps");
  eval->add_option("--out", eval_args.out, "report CSV path")->required();

  HistArgs hist_args;
  CLI::App* hist = app.add_subcommand("hist", "spectral diagnostics CSV");
  hist->add_option("--input", hist_args.input, "input wav")->required();
  hist->add_option("--mode", hist_args.mode, "hist or interband")
      ->check(CLI::IsMember({"hist", "interband"}));
  hist->add_option("--bins", hist_args.bins, "histogram bin count");
  hist->add_flag("--per-band", hist_args.per_band, "one histogram per band");
  hist->add_option("--out", hist_args.out, "output CSV path")->required();
  hist->add_option("--frame", hist_args.stft.frame_len, "analysis frame length");
  hist->add_option("--hop", hist_args.stft.hop, "frame hop");
  hist->add_option("--fft", hist_args.stft.fft_len, "FFT length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*mix) return run_mix(mix_args);
    if (*sep) {
      RunConfig cfg;
      if (!config_path.empty()) cfg = load_config_file(config_path);
      // explicit flags override the config file
      if (!input_opt->empty()) cfg.input = sep_cfg.input;
      if (!method_opt->empty()) cfg.method = sep_cfg.method;
      if (!iters_opt->empty()) cfg.iters = sep_cfg.iters;
      if (!bases_opt->empty()) cfg.bases = sep_cfg.bases;
      if (!lambda_opt->empty()) cfg.sinkhorn.lambda = sep_cfg.sinkhorn.lambda;
      if (!gamma_opt->empty()) cfg.sinkhorn.gamma = sep_cfg.sinkhorn.gamma;
      if (!sit_opt->empty()) cfg.sinkhorn.inner_iters = sep_cfg.sinkhorn.inner_iters;
      if (!seed_opt->empty()) cfg.seed = sep_cfg.seed;
      if (!ref_opt->empty()) cfg.ref_channel = sep_cfg.ref_channel;
      if (!threads_opt->empty()) cfg.threads = sep_cfg.threads;
      if (!out_opt->empty()) cfg.out = sep_cfg.out;
      if (!frame_opt->empty()) cfg.stft.frame_len = stft_flags.frame_len;
      if (!hop_opt->empty()) cfg.stft.hop = stft_flags.hop;
      if (!fft_opt->empty()) cfg.stft.fft_len = stft_flags.fft_len;
      try {
        cfg.stft.validate();
        bss::method_from_string(cfg.method);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      return run_separate(cfg);
    }
    if (*eval) return run_evaluate(eval_args);
    if (*hist) return run_hist(hist_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
