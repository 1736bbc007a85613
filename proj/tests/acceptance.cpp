// Acceptance suite: runs every release criterion end to end and prints
// one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bss/audio_io.hpp"
#include "bss/evaluation.hpp"
#include "bss/mixsim.hpp"
#include "bss/parallel.hpp"
#include "bss/rng.hpp"
#include "bss/separation.hpp"
#include "bss/stft.hpp"
#include "bss/transport.hpp"
#include "support/oracles.hpp"
#include "support/signals.hpp"

using namespace bss;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("[%s] criterion %2d: %-28s %s\n", pass ? "PASS" : "FAIL",
              criterion, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ------------------------------------------------------------------ 1

void criterion_stft_roundtrip() {
  const auto start = Clock::now();
  const int rate = 16000;
  AudioBuffer noise = testsig::noise_buffer(20250101, 1, 3 * rate, rate);
  StftConfig cfg;  // 512 / 256 / 1024
  const ComplexSpectrogram spec = analyze(noise, cfg);
  const AudioBuffer back = synthesize(spec);
  double err = 0.0, ref = 0.0;
  const long lo = cfg.frame_len;
  const long hi = static_cast<long>(back.num_samples()) - cfg.frame_len;
  for (long k = lo; k < hi; ++k) {
    const double d = back.samples[0][k] - noise.samples[0][k];
    err += d * d;
    ref += noise.samples[0][k] * noise.samples[0][k];
  }
  const double rel = std::sqrt(err / ref);
  const double elapsed = seconds_since(start);
  report(1, "stft round-trip", rel < 1e-8 && elapsed < 1.0,
         fmt("interior rel L2 %.3g (< 1e-8), %.2fs (< 1s)", rel, elapsed));
}

// ------------------------------------------------------------------ 2

void criterion_closed_form() {
  SinkhornParams params;
  params.inner_iters = 50;
  params.normalize_scale = false;
  const BandPowerPair pair = BandPowerPair::floored(
      Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), params.eps_floor);
  MappingResult result = optimal_mapping(pair, params);  // warm-up
  std::vector<double> times;
  for (int rep = 0; rep < 21; ++rep) {
    const auto t0 = Clock::now();
    result = optimal_mapping(pair, params);
    times.push_back(seconds_since(t0) * 1e3);
  }
  const double expected = std::exp(-1.0 / 11.0);
  const double err = std::abs(result.plan.q(0, 0) - expected);
  const double ms = median(times);
  report(2, "transport closed form", err < 1e-6 && ms < 1.0,
         fmt("|Q - e^{-1/11}| = %.3g (< 1e-6), median %.4f ms (< 1 ms)", err, ms));
}

// ------------------------------------------------------------------ 3

void criterion_oracle_equivalence() {
  const auto start = Clock::now();
  SinkhornParams params;
  params.inner_iters = 200;
  params.normalize_scale = false;
  Rng rng(31);
  double worst_gap = -1e300;
  bool pass = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 3);
    Eigen::VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a(i) = rng.uniform(0.1, 2.0);
      b(i) = rng.uniform(0.1, 2.0);
    }
    const BandPowerPair pair = BandPowerPair::floored(a, b, params.eps_floor);
    const MappingResult result = optimal_mapping(pair, params);
    const double value = sinkhorn_objective(result.plan, pair, params);
    const auto oracle = oracle::minimize_transport(
        cost_matrix(pair), pair.sigma2, pair.ypow, params.lambda, params.gamma);
    const double gap = value - oracle.objective;
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-3) pass = false;
  }
  const double elapsed = seconds_since(start);
  report(3, "transport oracle optimum", pass && elapsed < 30.0,
         fmt("worst objective gap %.3g (<= 1e-3), %.1fs (< 30s)", worst_gap,
             elapsed));
}

// ------------------------------------------------------------------ 4

void criterion_marginal_limit() {
  SinkhornParams params;
  params.lambda = 5.0;
  params.gamma = 100.0;
  params.inner_iters = 200;
  params.normalize_scale = false;
  Rng rng(41);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform() * 13);
    Eigen::VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a(i) = rng.uniform(0.5, 1.5);
      b(i) = rng.uniform(0.5, 1.5);
    }
    b *= a.sum() / b.sum();
    const BandPowerPair pair = BandPowerPair::floored(a, b, params.eps_floor);
    const MappingResult result = optimal_mapping(pair, params);
    const double row_err = (result.plan.q.rowwise().sum() - pair.sigma2)
                               .lpNorm<1>() / pair.sigma2.lpNorm<1>();
    const double col_err =
        (result.plan.q.colwise().sum().transpose() - pair.ypow).lpNorm<1>() /
        pair.ypow.lpNorm<1>();
    worst = std::max({worst, row_err, col_err});
  }
  report(4, "balanced marginal limit", worst < 0.05,
         fmt("worst marginal L1 rel error %.4f (< 0.05)", worst));
}

// ------------------------------------------------------------------ 5

void criterion_nmf_monotone() {
  constexpr double kEps = 1e-12;
  double worst_increase = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(child_seed(51, trial));
    VarianceTensor target;
    Eigen::MatrixXd m(64, 128);
    for (int t = 0; t < 128; ++t)
      for (int f = 0; f < 64; ++f) m(f, t) = rng.uniform(0.05, 4.0);
    target.v = {m};
    NmfFactors factors = NmfFactors::seeded(1, 64, 128, 10, child_seed(52, trial));
    double previous = is_divergence(target.v[0], model_variances(factors, kEps).v[0]);
    for (int sweep = 0; sweep < 50; ++sweep) {
      nmf_update(factors, target, 0, NmfRule::standard, kEps);
      const double current =
          is_divergence(target.v[0], model_variances(factors, kEps).v[0]);
      worst_increase = std::max(worst_increase, (current - previous) / previous);
      previous = current;
    }
  }
  report(5, "low-rank fit monotone", worst_increase <= 1e-9,
         fmt("worst relative increase %.3g (<= 1e-9)", worst_increase));
}

// ------------------------------------------------------------------ 6

void criterion_ip_normalization() {
  const int rate = 8000;
  AudioBuffer sources;
  sources.sample_rate = rate;
  sources.samples = {testsig::speechlike_source(61, 2 * rate, rate),
                     testsig::speechlike_source(62, 2 * rate, rate)};
  const RirBank bank = RirBank::synthetic(63, 2, 2, 256, 0.03, rate);
  const AudioBuffer mix = convolve_mix(sources, bank);
  StftConfig stft_cfg;
  SeparationConfig cfg;
  cfg.method = Method::auxiva;
  cfg.iters = 20;
  const SeparationResult result = run_separation(analyze(mix, stft_cfg), cfg);
  double worst = 0.0;
  for (const auto& stats : result.trace)
    worst = std::max(worst, stats.max_ip_norm_dev);
  report(6, "demixing row normalization", worst <= 1e-10,
         fmt("max |d^H O d - 1| = %.3g (<= 1e-10) over %zu iterations", worst,
             result.trace.size()));
}

// ------------------------------------------------------------------ 7

void criterion_projection_consistency() {
  Rng rng(71);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int channels = 2 + static_cast<int>(rng.uniform() * 3);
    const int bins = 6;
    const int frames = 8;
    ComplexSpectrogram x;
    x.config.frame_len = x.config.hop = x.config.fft_len = 2 * (bins - 1);
    x.sample_rate = 8000;
    for (int c = 0; c < channels; ++c) {
      Eigen::MatrixXcd chan(bins, frames);
      for (int f = 0; f < bins; ++f)
        for (int t = 0; t < frames; ++t)
          chan(f, t) = std::complex<double>(rng.gauss(), rng.gauss());
      x.channels.push_back(chan);
    }
    DemixingStack stack = DemixingStack::identity(bins, channels);
    for (auto& d : stack.d) {
      for (int i = 0; i < channels; ++i)
        for (int j = 0; j < channels; ++j)
          d(i, j) = std::complex<double>(rng.gauss(), rng.gauss());
      d += 1.5 * Eigen::MatrixXcd::Identity(channels, channels);
    }
    const int ref = static_cast<int>(rng.uniform() * channels);
    const ComplexSpectrogram y = demix(x, stack);
    const ComplexSpectrogram projected = project_back(y, stack, ref);
    for (int f = 0; f < bins; ++f)
      for (int t = 0; t < frames; ++t) {
        std::complex<double> sum = 0.0;
        for (int c = 0; c < channels; ++c) sum += projected.channels[c](f, t);
        worst = std::max(worst, std::abs(sum - x.channels[ref](f, t)));
      }
  }
  report(7, "projection-back consistency", worst < 1e-8,
         fmt("max |sum_n yhat_n - x_ref| = %.3g (< 1e-8)", worst));
}

// ------------------------------------------------------------------ 8

double system_sir_db(const DemixingStack& demixing, const Eigen::MatrixXcd& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  double best = -1e300;
  do {
    double mean = 0.0;
    for (int row = 0; row < n; ++row) {
      double sig = 0.0, err = 0.0;
      for (const auto& d_f : demixing.d) {
        const Eigen::MatrixXcd g = d_f * a;
        for (int k = 0; k < n; ++k) {
          const double p = std::norm(g(row, k));
          (k == idx[row] ? sig : err) += p;
        }
      }
      mean += 10.0 * std::log10(std::max(sig, 1e-300) / std::max(err, 1e-300));
    }
    best = std::max(best, mean / n);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

void criterion_desk_scale_separation() {
  const auto start = Clock::now();
  std::vector<double> improvements;
  for (int seed = 0; seed < 10; ++seed) {
    const ComplexSpectrogram sources =
        testsig::laplacian_spectrogram(900 + seed, 2, 1, 20000);
    Rng rng(child_seed(7777, seed));
    const auto phase = [&] {
      const double t = rng.uniform(0.0, 2 * M_PI);
      return std::complex<double>(std::cos(t), std::sin(t));
    };
    Eigen::MatrixXcd gains(2, 2);
    gains << 1.0, 0.55 * phase(), 0.55 * phase(), 1.0;
    ComplexSpectrogram x = sources;
    for (int m = 0; m < 2; ++m) {
      x.channels[m].setZero();
      for (int k = 0; k < 2; ++k)
        x.channels[m] += gains(m, k) * sources.channels[k];
    }
    SeparationConfig cfg;
    cfg.method = Method::auxiva;
    cfg.iters = 50;
    const SeparationResult result = run_separation(x, cfg);
    improvements.push_back(
        system_sir_db(result.demixing, gains) -
        system_sir_db(DemixingStack::identity(1, 2), gains));
  }
  const double med = median(improvements);
  const double elapsed = seconds_since(start);
  report(8, "instantaneous separation", med >= 20.0 && elapsed < 60.0,
         fmt("median SIR improvement %.1f dB (>= 20), %.1fs (< 60s)", med,
             elapsed));
}

// ------------------------------------------------------------------ 9

struct FixtureScores {
  double auxiva = 0, siva = 0, ilrma = 0, silrma = 0;
};

double mean_delta_sdr(const AudioBuffer& ests, const AudioBuffer& refs,
                      const Eigen::VectorXd& mix_ref) {
  const EvalReport report = evaluate(ests, refs, mix_ref, 512);
  double acc = 0.0;
  for (const auto& row : report.rows) acc += row.delta.sdr;
  return acc / static_cast<double>(report.rows.size());
}

void criterion_method_trend() {
  const auto start = Clock::now();
  const int rate = 8000;
  const long len = 5 * rate;
  const int n_fixtures = 20;
  std::vector<FixtureScores> scores(n_fixtures);

  parallel_for(n_fixtures, 2, [&](std::size_t i) {
    const auto fixture_seed = static_cast<std::uint64_t>(1 + i);
    AudioBuffer sources;
    sources.sample_rate = rate;
    sources.samples = {
        testsig::speechlike_source(child_seed(fixture_seed, 1), len, rate),
        testsig::speechlike_source(child_seed(fixture_seed, 2), len, rate)};
    const RirBank bank =
        RirBank::synthetic(fixture_seed, 2, 2, 424, 0.05, rate);
    const AudioBuffer mix = convolve_mix(sources, bank);

    AudioBuffer refs;
    refs.sample_rate = rate;
    for (int n = 0; n < 2; ++n) {
      AudioBuffer one;
      one.sample_rate = rate;
      one.samples = {sources.samples[n]};
      RirBank single;
      single.sample_rate = rate;
      single.h = {{bank.h[0][n]}};
      refs.samples.push_back(convolve_mix(one, single).samples[0]);
    }
    const Eigen::VectorXd mix_ref = Eigen::Map<const Eigen::VectorXd>(
        mix.samples[0].data(), mix.num_samples());

    StftConfig stft_cfg;  // 512 / 256 / 1024
    const ComplexSpectrogram x = analyze(mix, stft_cfg);
    for (Method method :
         {Method::auxiva, Method::siva, Method::ilrma, Method::silrma}) {
      SeparationConfig cfg;
      cfg.method = method;
      cfg.iters = 30;
      cfg.nmf_order = 10;
      cfg.seed = fixture_seed;
      cfg.threads = 1;
      const SeparationResult result = run_separation(x, cfg);
      AudioBuffer ests =
          synthesize(project_back(result.estimates, result.demixing, 0));
      for (auto& ch : ests.samples) ch.resize(mix.num_samples(), 0.0);
      const double delta = mean_delta_sdr(ests, refs, mix_ref);
      switch (method) {
        case Method::auxiva: scores[i].auxiva = delta; break;
        case Method::siva: scores[i].siva = delta; break;
        case Method::ilrma: scores[i].ilrma = delta; break;
        case Method::silrma: scores[i].silrma = delta; break;
      }
    }
  });

  std::vector<double> aux, siva, ilrma, silrma;
  for (const auto& s : scores) {
    aux.push_back(s.auxiva);
    siva.push_back(s.siva);
    ilrma.push_back(s.ilrma);
    silrma.push_back(s.silrma);
  }
  const double m_aux = median(aux), m_siva = median(siva);
  const double m_ilrma = median(ilrma), m_silrma = median(silrma);
  const double elapsed = seconds_since(start);
  const bool pass =
      m_silrma >= m_ilrma && m_siva >= m_aux && elapsed < 600.0;
  report(9, "transport-variant trend", pass,
         fmt("median dSDR dB: auxiva %.2f, siva %.2f, ilrma %.2f, silrma %.2f; "
             "%.0fs (< 600s)",
             m_aux, m_siva, m_ilrma, m_silrma, elapsed));
}

// ----------------------------------------------------------------- 10

void criterion_metric_formulas() {
  Rng rng(101);
  Eigen::MatrixXd m(256, 4);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 256; ++i) m(i, j) = rng.gauss();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::MatrixXd basis = Eigen::MatrixXd(qr.householderQ()).leftCols(4);

  Decomposition dec;
  dec.s_target = basis.col(0);
  dec.e_spat = std::sqrt(0.1) * basis.col(1);
  dec.e_interf = std::sqrt(0.05) * basis.col(2);
  dec.e_artif = std::sqrt(0.01) * basis.col(3);
  const Metrics metrics = sdr_sir_sar(dec);
  const double e_sdr = std::abs(metrics.sdr - 10.0 * std::log10(1.0 / 0.16));
  const double e_sir = std::abs(metrics.sir - 10.0 * std::log10(1.1 / 0.05));
  const double e_sar = std::abs(metrics.sar - 10.0 * std::log10(1.15 / 0.01));

  Decomposition twenty;
  twenty.s_target = basis.col(0);
  twenty.e_spat = Eigen::VectorXd::Zero(256);
  twenty.e_interf = Eigen::VectorXd::Zero(256);
  twenty.e_artif = 0.1 * basis.col(1);
  const double e_twenty = std::abs(sdr_sir_sar(twenty).sdr - 20.0);

  const double worst = std::max({e_sdr, e_sir, e_sar, e_twenty});
  report(10, "metric formulas", worst < 1e-9,
         fmt("worst dB error %.3g (< 1e-9)", worst));
}

// ----------------------------------------------------------------- 11

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SINKBSS_BIN) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trace_without_wall_ms(const fs::path& p) {
  std::ifstream in(p);
  std::string line, kept;
  while (std::getline(in, line)) {
    const auto last_comma = line.rfind(',');
    kept += line.substr(0, last_comma) + "\n";
  }
  return kept;
}

void criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / "sinkbss_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const int rate = 8000;
  AudioBuffer sources;
  sources.sample_rate = rate;
  sources.samples = {testsig::speechlike_source(111, 2 * rate, rate),
                     testsig::speechlike_source(112, 2 * rate, rate)};
  const RirBank bank = RirBank::synthetic(113, 2, 2, 300, 0.04, rate);
  write_wav(dir / "mix.wav", convolve_mix(sources, bank), WavEncoding::float32);

  const fs::path out = dir / "run";
  const std::string flags = "separate --input " + (dir / "mix.wav").string() +
                            " --method silrma --iters 3 --bases 4 --seed 9 "
                            "--threads 1 --out " + out.string();
  bool pass = run_cli(flags) == 0;
  const std::string est1 = slurp(out / "est_1.wav");
  const std::string est2 = slurp(out / "est_2.wav");
  const std::string resolved = slurp(out / "resolved_config.json");
  const std::string trace = trace_without_wall_ms(out / "trace.csv");

  fs::remove_all(out);
  pass = pass && run_cli(flags) == 0;
  pass = pass && est1 == slurp(out / "est_1.wav");
  pass = pass && est2 == slurp(out / "est_2.wav");
  pass = pass && resolved == slurp(out / "resolved_config.json");
  pass = pass && trace == trace_without_wall_ms(out / "trace.csv");
  report(11, "repeat-run determinism", pass,
         pass ? "byte-identical wavs, config and trace (wall_ms aside)"
              : "outputs differ between identical runs");
}

// ----------------------------------------------------------------- 12

void criterion_complexity() {
  SinkhornParams params;  // defaults: 10 inner iterations
  const auto time_size = [&](int n) {
    Rng rng(121 + n);
    Eigen::VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a(i) = rng.uniform(0.25, 1.0);
      b(i) = rng.uniform(0.25, 1.0);
    }
    const BandPowerPair pair = BandPowerPair::floored(a, b, params.eps_floor);
    optimal_mapping(pair, params);  // warm-up
    std::vector<double> times;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = Clock::now();
      optimal_mapping(pair, params);
      times.push_back(seconds_since(t0));
    }
    return median(times);
  };
  const double t_small = time_size(256);
  const double t_large = time_size(1024);
  const double ratio = t_large / t_small;
  report(12, "quadratic size scaling", ratio < 24.0,
         fmt("t(F=1024)/t(F=256) = %.1f (< 24; %.2f ms vs %.2f ms)", ratio,
             t_large * 1e3, t_small * 1e3));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_stft_roundtrip();
  criterion_closed_form();
  criterion_oracle_equivalence();
  criterion_marginal_limit();
  criterion_nmf_monotone();
  criterion_ip_normalization();
  criterion_projection_consistency();
  criterion_desk_scale_separation();
  criterion_method_trend();
  criterion_metric_formulas();
  criterion_determinism();
  criterion_complexity();
  if (g_failures == 0) {
    std::printf("all 12 criteria passed\n");
    return 0;
  }
  std::printf("%d criteria FAILED\n", g_failures);
  return 1;
}
