// sonograin: corpus preparation, offline rendering, benchmarking and the live service.

#include <csignal>
#include <pthread.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sonograin/server.hpp"
#include "sonograin/sonograin.hpp"

namespace sg = sonograin;

namespace {

constexpr int kExitBuild = 1;
constexpr int kExitInput = 2;

struct SynthFlags {
  sg::SynthParams params;

  void attach(CLI::App* cmd) {
    cmd->add_option("--k", params.k, "Neighbours retrieved per selection")->capture_default_str();
    cmd->add_option("--n", params.n, "Neighbour fragments per grain (even)")->capture_default_str();
    cmd->add_option("--freeze", params.freeze_hops, "Hops a selection is held")->capture_default_str();
    cmd->add_option("--fade", params.fade_len, "Crossfade length in samples")->capture_default_str();
    cmd->add_option("--v-silence", params.v_silence, "Speed below which output fades out (mm/s)")->capture_default_str();
  }
};

double percentile_of(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return sg::percentile_linear(v, p);
}

int run_prepare(const std::string& audio, const std::string& trace_path, bool positions, std::size_t window,
                const std::string& out, const sg::PrepParams& params, std::size_t min_fragments) {
  sg::VelocityTrace trace;
  std::shared_ptr<const sg::AudioClip> clip;
  try {
    params.validate();
    trace = positions ? sg::velocity_from_positions(sg::load_positions(trace_path), window)
                      : sg::load_trace(trace_path);
    clip = std::make_shared<const sg::AudioClip>(sg::load_audio(audio));
  } catch (const sg::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    sg::FilterStats stats;
    auto fragments = sg::segment(*clip, trace);
    sg::Corpus corpus = sg::filter_outliers(fragments, params, min_fragments, &stats);
    corpus.audio = clip;
    corpus.audio_path = audio;
    corpus.audio_sha256 = sg::sha256_file(audio);
    sg::save_corpus(corpus, out);
    std::printf("total: %zu\n", stats.total);
    std::printf("dropped_velocity: %zu\n", stats.dropped_velocity);
    std::printf("dropped_percentile: %zu\n", stats.dropped_percentile);
    std::printf("retained: %zu\n", stats.retained);
    std::printf("ratio_bounds: [%.17g, %.17g]\n", stats.lo_value, stats.hi_value);
    std::printf("mean_ratio: %.17g\n", corpus.mean_ratio);
    return 0;
  } catch (const sg::BuildError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBuild;
  } catch (const sg::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

int run_render(const std::string& corpus_path, const std::string& trace_path, const std::string& out,
               std::uint64_t seed, unsigned threads, const sg::SynthParams& params) {
  try {
    auto material = sg::Material::make(sg::load_corpus(corpus_path));
    auto trace = sg::load_trace(trace_path);
    const auto t0 = std::chrono::steady_clock::now();
    auto clip = sg::render_offline(material, trace, seed, params, threads);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    sg::write_wav(out, clip, sg::SampleFormat::Pcm24);
    std::printf("hops: %zu\n", trace.size());
    std::printf("duration_s: %.2f\n", clip.duration_s());
    std::printf("real_time_factor: %.1f\n", wall > 0 ? clip.duration_s() / wall : INFINITY);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBuild;
  }
}

// Triangle sweep 0 -> 300 -> 0 mm/s over 400 hops, direction turning slowly.
sg::Vec2 sweep_velocity(std::size_t hop) {
  const double phase = static_cast<double>(hop % 400) / 400.0;
  const double speed = 300.0 * (phase < 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(hop) / 3000.0;
  return {speed * std::cos(angle), speed * std::sin(angle)};
}

int run_bench(const std::string& corpus_path, std::size_t hops, std::uint64_t seed, const sg::SynthParams& params) {
  std::shared_ptr<const sg::Material> material;
  try {
    material = sg::Material::make(sg::load_corpus(corpus_path));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBuild;
  }
  using clock = std::chrono::steady_clock;
  auto us = [](clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); };

  sg::Synthesizer synth(material, params, seed);
  sg::HopBlock block;
  std::vector<double> hop_us, knn_us;
  hop_us.reserve(hops);
  knn_us.reserve(hops);
  std::vector<sg::Neighbor> scratch;
  for (std::size_t i = 0; i < hops; ++i) {
    const sg::Vec2 v = sweep_velocity(i);
    auto t0 = clock::now();
    synth.process_hop(v, block);
    hop_us.push_back(us(clock::now() - t0));
    t0 = clock::now();
    material->index.knn(v, params.k, scratch);
    knn_us.push_back(us(clock::now() - t0));
  }
  std::printf("fragments: %zu\n", material->corpus.size());
  std::printf("hops: %zu\n", hops);
  std::printf("selections: %llu\n", static_cast<unsigned long long>(synth.stats().selections));
  std::printf("p50_hop_us: %.2f\n", percentile_of(hop_us, 50));
  std::printf("p99_hop_us: %.2f\n", percentile_of(hop_us, 99));
  std::printf("max_hop_us: %.2f\n", percentile_of(hop_us, 100));
  std::printf("p50_knn_us: %.2f\n", percentile_of(knn_us, 50));
  std::printf("p99_knn_us: %.2f\n", percentile_of(knn_us, 99));
  std::printf("max_knn_us: %.2f\n", percentile_of(knn_us, 100));
  return 0;
}

int run_stats(const std::string& corpus_path, const std::string& csv_path) {
  sg::Corpus corpus;
  try {
    corpus = sg::load_corpus(corpus_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBuild;
  }
  std::printf("audio: %s\n", corpus.audio_path.string().c_str());
  std::printf("duration_s: %.3f\n", corpus.clip().duration_s());
  std::printf("clip_fragments: %zu\n", corpus.clip_fragment_count());
  std::printf("retained: %zu\n", corpus.size());
  std::printf("mean_ratio: %.17g\n", corpus.mean_ratio);
  std::printf("params: p_lo=%g p_hi=%g v_min=%g\n", corpus.params.p_lo, corpus.params.p_hi, corpus.params.v_min);
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) {
      std::cerr << "error: cannot write " << csv_path << '\n';
      return kExitInput;
    }
    csv << "v2_mm2_s2,loudness,ratio\n";
    csv.precision(17);
    for (const auto& f : corpus.fragments)
      csv << f.velocity.squared_norm() << ',' << f.loudness << ',' << f.ratio << '\n';
    std::printf("csv_rows: %zu\n", corpus.size());
  }
  return 0;
}

int run_serve(const std::string& address, unsigned short port, const std::string& corpus_dir, unsigned threads,
              std::size_t max_sessions, const sg::SynthParams& params) {
  sg::MaterialRegistry registry;
  try {
    registry.load_directory(corpus_dir);
  } catch (const sg::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  sg::SessionHub hub(registry, params, max_sessions);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    sg::Server server(hub, address, port);
    server.start(threads);
    std::printf("serving %zu corpora on http://%s:%u\n", registry.size(), address.c_str(), server.port());
    std::fflush(stdout);
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBuild;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Velocity-driven granular contact-sound synthesis"};
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand("prepare", "Build a corpus from a recording and its velocity trace");
  std::string audio, trace, out, corpus;
  bool positions = false;
  std::size_t window = 3, min_fragments = sg::kDefaultMinFragments;
  sg::PrepParams prep;
  prepare->add_option("--audio", audio, "Source WAV (48 kHz)")->required();
  prepare->add_option("--trace", trace, "Velocity CSV (t_s,vx_mm_s,vy_mm_s)")->required();
  prepare->add_flag("--positions", positions, "Trace holds positions (t_s,x_mm,y_mm) instead of velocities");
  prepare->add_option("--window", window, "Position smoothing window (odd)")->capture_default_str();
  prepare->add_option("--out", out, "Corpus manifest to write")->required();
  prepare->add_option("--p-lo", prep.p_lo, "Lower ratio percentile")->capture_default_str();
  prepare->add_option("--p-hi", prep.p_hi, "Upper ratio percentile")->capture_default_str();
  prepare->add_option("--v-min", prep.v_min, "Minimum speed for annotation (mm/s)")->capture_default_str();
  prepare->add_option("--min-fragments", min_fragments, "Fail unless this many fragments survive")->capture_default_str();

  auto* render = app.add_subcommand("render", "Render a velocity trace offline to a 24-bit WAV");
  std::uint64_t seed = 0;
  unsigned threads = 1;
  SynthFlags render_flags;
  render->add_option("--corpus", corpus, "Corpus manifest")->required();
  render->add_option("--trace", trace, "Velocity CSV")->required();
  render->add_option("--out", out, "Output WAV")->required();
  render->add_option("--seed", seed, "RNG seed")->capture_default_str();
  render->add_option("--threads", threads, "Worker threads for neighbour queries")->capture_default_str();
  render_flags.attach(render);

  auto* bench = app.add_subcommand("bench", "Time per-hop synthesis and neighbour queries");
  std::size_t hops = 10000;
  SynthFlags bench_flags;
  bench->add_option("--corpus", corpus, "Corpus manifest")->required();
  bench->add_option("--hops", hops, "Hops to synthesize")->capture_default_str();
  bench->add_option("--seed", seed, "RNG seed")->capture_default_str();
  bench_flags.attach(bench);

  auto* stats = app.add_subcommand("stats", "Summarize a corpus");
  std::string csv;
  stats->add_option("--corpus", corpus, "Corpus manifest")->required();
  stats->add_option("--csv", csv, "Write |v|^2, loudness, ratio per fragment");

  auto* serve = app.add_subcommand("serve", "Run the HTTP/websocket sonification service");
  std::string address = "127.0.0.1", corpus_dir;
  unsigned short port = 8080;
  std::size_t max_sessions = 64;
  unsigned serve_threads = std::max(1u, std::thread::hardware_concurrency());
  SynthFlags serve_flags;
  serve->add_option("--listen", address, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port")->capture_default_str();
  serve->add_option("--corpus-dir", corpus_dir, "Directory of corpus manifests")->required();
  serve->add_option("--threads", serve_threads, "I/O threads")->capture_default_str();
  serve->add_option("--max-sessions", max_sessions, "Concurrent session limit")->capture_default_str();
  serve_flags.attach(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  if (*prepare) return run_prepare(audio, trace, positions, window, out, prep, min_fragments);
  if (*render) return run_render(corpus, trace, out, seed, threads, render_flags.params);
  if (*bench) return run_bench(corpus, hops, seed, bench_flags.params);
  if (*stats) return run_stats(corpus, csv);
  if (*serve) return run_serve(address, port, corpus_dir, serve_threads, max_sessions, serve_flags.params);
  return kExitInput;
}
