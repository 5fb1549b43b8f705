// Copyright 2026 The Untwist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "untwist/cli.hpp"

#include <csignal>
#include <fstream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "untwist/bench/groundbench.hpp"
#include "untwist/describe/deep_description.hpp"
#include "untwist/llm/mocks.hpp"
#include "untwist/pipeline.hpp"
#include "untwist/session/server.hpp"

namespace untwist::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LlmMode {
  bool mock = false;
  bool live = false;

  void add_to(CLI::App& cmd) {
    auto* m = cmd.add_flag("--mock-llm", mock, "Use offline stand-ins for every model call (default)");
    auto* l = cmd.add_flag("--live", live, "Call the configured OpenAI-compatible endpoint");
    m->excludes(l);
  }
};

std::unique_ptr<llm::OpenAiGateway> make_gateway(const AppConfig& cfg) {
  if (cfg.gateway.api_key.empty())
    throw ConfigError(fmt::format("--live needs an API key in {}", llm::kApiKeyEnv));
  return std::make_unique<llm::OpenAiGateway>(cfg.gateway, llm::make_http_transport(cfg.gateway));
}

template <typename T>
void take(CLI::Option* opt, const T& value, std::optional<T>& slot) {
  if (opt->count() > 0) slot = value;
}

int run_ingest(const AppConfig& cfg, const fs::path& video, const fs::path& out_dir,
               const std::optional<fs::path>& decoder, std::optional<fs::path> transcript,
               const LlmMode& mode, std::ostream& out) {
  std::unique_ptr<media::FrameSource> source;
  if (decoder) {
    source = std::make_unique<media::DecoderFrameSource>(*decoder, video, out_dir / ".decoded",
                                                         cfg.sampling_interval_s);
  } else if (fs::is_directory(video)) {
    source = std::make_unique<media::DirectoryFrameSource>(video);
    if (!transcript && fs::exists(video / "transcript.txt")) transcript = video / "transcript.txt";
  } else {
    throw UsageError("--video must be a frame directory unless --decoder is given");
  }

  std::unique_ptr<llm::OpenAiGateway> gateway;
  std::unique_ptr<llm::Transcriber> offline;
  llm::Transcriber* transcriber = nullptr;
  if (mode.live) {
    gateway = make_gateway(cfg);
    transcriber = gateway.get();
  } else {
    offline = std::make_unique<llm::ScriptedTranscriber>(std::string());
    transcriber = offline.get();
  }

  pipeline::IngestOptions opts;
  opts.interval_s = cfg.sampling_interval_s;
  if (cfg.k_max) opts.bounds = keyframe::KBounds{cfg.k_min, *cfg.k_max};
  opts.elbow = {cfg.tau, cfg.seed, cfg.restarts};
  opts.transcript_file = transcript;
  const auto result = pipeline::ingest(*source, out_dir, opts, transcriber);
  out << fmt::format("sampled {} frames; selected {} keyframes (K = {})\n", result.frame_count,
                     result.keyframes.size(), result.choice.k);
  out << "wrote " << (out_dir / "keyframes.json").string() << "\n";
  return kOk;
}

int run_describe(const AppConfig& cfg, const fs::path& video_dir, const LlmMode& mode,
                 std::ostream& out) {
  std::unique_ptr<llm::OpenAiGateway> gateway;
  llm::OfflineChat offline;
  llm::ChatClient* chat = &offline;
  if (mode.live) {
    gateway = make_gateway(cfg);
    chat = gateway.get();
  }
  const auto dd = pipeline::describe_video(video_dir, *chat);
  out << fmt::format("described {} keyframes; narrative {} chars\n", dd.frame_entries.size(),
                     dd.narrative.size());
  out << "wrote " << (video_dir / "deep_description.json").string() << "\n";
  return kOk;
}

int run_serve(const AppConfig& cfg, const std::string& host, unsigned short port,
              const LlmMode& mode, std::ostream& out) {
  // Block termination signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<llm::OpenAiGateway> gateway;
  llm::OfflineChat offline;
  llm::ChatClient* chat = &offline;
  if (mode.live) {
    gateway = make_gateway(cfg);
    chat = gateway.get();
  }
  session::VideoCatalog catalog(cfg.data_dir);
  session::JsonlSessionStore store(cfg.data_dir / "sessions");
  session::ServiceOptions options{cfg.style, cfg.auto_contrast, cfg.history_turns};
  session::SessionService service(catalog, store, *chat, cfg.data_dir / "sessions", options);
  session::Server server(service, catalog, store, host, port);
  const auto bound = server.start();
  out << fmt::format("serving {} on http://{}:{} (websocket at /ws)\n", cfg.data_dir.string(),
                     host, bound)
      << std::flush;

  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("signal {} received; shutting down", sig);
  server.stop();
  return kOk;
}

int run_bench_generate(const AppConfig& cfg, std::size_t n, const fs::path& dir, std::ostream& out) {
  bench::write_corpus(dir, n, cfg.generator);
  out << fmt::format("wrote {} cases to {}\n", n, dir.string());
  return kOk;
}

int run_bench_run(const AppConfig& cfg, const std::string& strategy_arg, const std::string& mock,
                  bool live, std::size_t n, const std::optional<fs::path>& report_path,
                  const std::optional<fs::path>& cache_dir, std::size_t workers, std::ostream& out) {
  std::vector<bench::Strategy> strategies;
  if (strategy_arg == "both") {
    strategies = {bench::Strategy::RawCoordinate, bench::Strategy::Annotated};
  } else if (const auto s = bench::parse_strategy(strategy_arg)) {
    strategies = {*s};
  } else {
    throw UsageError("--strategy must be annotated, raw or both");
  }

  std::unique_ptr<llm::OpenAiGateway> gateway;
  bench::ChatFactory factory;
  bench::RunOptions options;
  options.generator = cfg.generator;
  options.cache_dir = cache_dir;
  options.workers = workers;
  if (live) {
    gateway = make_gateway(cfg);
    auto* gw = gateway.get();
    factory = [gw](const bench::BenchCase&) -> std::unique_ptr<llm::ChatClient> {
      return std::make_unique<llm::TemperatureChat>(*gw, 0.0);
    };
    options.model = gateway->model_name();
  } else if (mock == "spatial" || mock == "blind") {
    const auto competence =
        mock == "spatial" ? llm::VisionCompetence::Spatial : llm::VisionCompetence::Blind;
    factory = bench::oracle_factory(competence);
    options.model = "mock-" + mock;
  } else {
    throw UsageError("bench run needs --mock spatial|blind or --live");
  }

  std::vector<bench::BenchReport> reports;
  for (const auto s : strategies) reports.push_back(bench::run_benchmark(n, s, factory, options));
  const std::string table = bench::format_table(reports);
  out << table;

  if (report_path) {
    if (report_path->has_parent_path()) fs::create_directories(report_path->parent_path());
    json doc = json::array();
    for (const auto& r : reports) doc.push_back(bench::to_json(r));
    std::ofstream(*report_path) << (reports.size() == 1 ? doc[0] : doc).dump(2) << "\n";
    fs::path table_path = *report_path;
    table_path.replace_extension(".txt");
    std::ofstream(table_path) << table;
    out << "wrote " << report_path->string() << " and " << table_path.string() << "\n";
  }
  return kOk;
}

const CLI::App* deepest(const CLI::App* app) {
  while (!app->get_subcommands().empty()) app = app->get_subcommands().front();
  return app;
}

}  // namespace

int run(const std::vector<std::string>& args, const Environment& env, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Untwist: pause a lecture video, box a region, ask about it.", "untwist"};
  app.set_version_flag("--version",
                       fmt::format("untwist {}\ndeep-description schema: {}\nwebsocket protocol: {}",
                                   kVersion, describe::kSchemaVersion, session::kProtocolVersion));
  std::string config_path;
  std::string log_level = "info";
  app.add_option("--config", config_path, "JSON config file (default: <data-dir>/config.json)");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.require_subcommand(1);

  ConfigOverrides flags;
  fs::path data_dir;
  double interval = 0;
  std::size_t k_max = 0;
  std::uint64_t seed = 0;
  auto add_data_dir = [&](CLI::App* cmd) {
    return cmd->add_option("--data-dir", data_dir, "Data directory");
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Sample frames, pick keyframes, transcribe");
  fs::path video, out_dir, decoder, transcript;
  LlmMode ingest_mode;
  ingest->add_option("--video", video, "Frame directory, or media file with --decoder")->required();
  ingest->add_option("--out", out_dir, "Output video directory")->required();
  auto* o_interval = ingest->add_option("--interval", interval, "Sampling interval in seconds")
                         ->check(CLI::PositiveNumber);
  auto* o_kmax = ingest->add_option("--k-max", k_max, "Upper bound on the cluster count")
                     ->check(CLI::PositiveNumber);
  auto* o_seed = ingest->add_option("--seed", seed, "Clustering seed");
  auto* o_decoder = ingest->add_option("--decoder", decoder, "External decoder executable");
  auto* o_transcript = ingest->add_option("--transcript", transcript, "Plain-text transcript file");
  auto* o_ingest_dd = add_data_dir(ingest);
  ingest_mode.add_to(*ingest);

  // describe
  auto* describe_cmd = app.add_subcommand("describe", "Build the deep description of an ingested video");
  fs::path video_dir;
  LlmMode describe_mode;
  describe_cmd->add_option("--video-dir,video_dir", video_dir, "Directory written by ingest")
      ->required()
      ->check(CLI::ExistingDirectory);
  auto* o_describe_dd = add_data_dir(describe_cmd);
  describe_mode.add_to(*describe_cmd);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP + websocket session service");
  std::string host = "127.0.0.1";
  unsigned short port = 8080;
  LlmMode serve_mode;
  auto* o_serve_dd = add_data_dir(serve);
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--host", host, "Listen address");
  serve_mode.add_to(*serve);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Synthetic grounding benchmark");
  bench_cmd->require_subcommand(1);
  auto* generate = bench_cmd->add_subcommand("generate", "Write a case corpus");
  std::size_t gen_n = 200;
  fs::path gen_out;
  generate->add_option("--n", gen_n, "Number of cases")->check(CLI::PositiveNumber);
  generate->add_option("--out", gen_out, "Output directory")->required();

  auto* bench_run = bench_cmd->add_subcommand("run", "Score a model on generated cases");
  std::string strategy = "annotated";
  std::string mock;
  bool bench_live = false;
  std::size_t run_n = 200;
  fs::path report, cache_dir;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  bench_run->add_option("--strategy", strategy, "annotated | raw | both")
      ->check(CLI::IsMember({"annotated", "raw", "both"}));
  auto* o_mock = bench_run->add_option("--mock", mock, "Oracle mock: spatial | blind")
                     ->check(CLI::IsMember({"spatial", "blind"}));
  auto* o_live = bench_run->add_flag("--live", bench_live, "Call the configured endpoint");
  o_mock->excludes(o_live);
  bench_run->add_option("--n", run_n, "Number of cases")->check(CLI::PositiveNumber);
  auto* o_report = bench_run->add_option("--report", report, "Write the report JSON (and a .txt table)");
  auto* o_cache = bench_run->add_option("--cache-dir", cache_dir, "Cache raw replies here");
  bench_run->add_option("--workers", workers, "Parallel cases")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::CallForHelp&) {
    out << deepest(&app)->help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << deepest(&app)->help();
    return kUsage;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    take(o_interval, interval, flags.sampling_interval_s);
    take(o_kmax, k_max, flags.k_max);
    take(o_seed, seed, flags.seed);
    for (auto* o : {o_ingest_dd, o_describe_dd, o_serve_dd})
      if (o->count() > 0) flags.data_dir = data_dir;
    const auto config_file =
        config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path);
    const AppConfig cfg = resolve_config(config_file, flags, env);

    if (ingest->parsed()) {
      return run_ingest(cfg, video, out_dir,
                        o_decoder->count() ? std::optional(decoder) : std::nullopt,
                        o_transcript->count() ? std::optional(transcript) : std::nullopt,
                        ingest_mode, out);
    }
    if (describe_cmd->parsed()) return run_describe(cfg, video_dir, describe_mode, out);
    if (serve->parsed()) return run_serve(cfg, host, port, serve_mode, out);
    if (generate->parsed()) return run_bench_generate(cfg, gen_n, gen_out, out);
    if (bench_run->parsed()) {
      return run_bench_run(cfg, strategy, mock, bench_live, run_n,
                           o_report->count() ? std::optional(report) : std::nullopt,
                           o_cache->count() ? std::optional(cache_dir) : std::nullopt, workers,
                           out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << deepest(&app)->help();
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  err << app.help();
  return kUsage;
}

}  // namespace untwist::cli
