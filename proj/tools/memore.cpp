#include <csignal>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "memore/api.hpp"
#include "memore/eval.hpp"
#include "memore/session.hpp"

using namespace memore;
namespace fs = std::filesystem;

namespace {

volatile std::sig_atomic_t g_stop = 0;

ServiceConfig load_config(const std::string& cli_path) {
  auto path = config_path(cli_path.empty() ? std::nullopt : std::optional<fs::path>(cli_path));
  return path ? ServiceConfig::load(*path) : ServiceConfig::defaults();
}

std::vector<double> parse_lengths(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad segment length '" + item + "'");
    }
  }
  return out;
}

eval::LabelMap label_map(const std::string& name) {
  if (name == "meld") return eval::LabelMap::meld();
  if (name == "identity") return eval::LabelMap::identity();
  throw Error(ErrorCode::InvalidArgument, "label map must be meld or identity");
}

std::set<Modality> manifest_modalities(const PlaybackManifest& m) {
  std::set<Modality> out;
  for (const auto& [_, entry] : m.entries()) {
    for (const auto& [channel, __] : entry) {
      for (auto mod : modalities_of(channel)) out.insert(mod);
    }
  }
  return out;
}

void print_summary(const eval::SweepResult& r) {
  for (const auto& l : r.per_length) {
    std::cout << "L=" << l.length_s << "s  " << l.segments_correct << "/" << l.segments_total
              << "  accuracy=" << l.accuracy() << "\n";
  }
  std::cout << "best_length_s=" << r.best_length << "\n";
}

void print_summary(const eval::ClassResult& r) {
  for (const auto& c : r.per_class) {
    std::cout << to_string(c.label) << "  " << c.correct << "/" << c.total
              << "  recall=" << c.recall() << "\n";
  }
  std::cout << "accuracy=" << r.accuracy() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion recognition for requirements elicitation sessions"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "TOML service config (MEMORE_CONFIG overrides)");

  auto* serve = app.add_subcommand("serve", "Run the session API");

  auto* create = app.add_subcommand("create", "Create a session");
  std::string name, session_id;
  create->add_option("--name", name);
  create->add_option("--session", session_id);

  auto* ingest = app.add_subcommand("ingest", "Ingest media files into a session");
  std::string frames, audio, transcript;
  double fps = 24.0;
  bool stop_after = false;
  ingest->add_option("--session", session_id, "Session id; created when missing")->required();
  ingest->add_option("--name", name, "Name for a newly created session");
  ingest->add_option("--frames", frames, "Directory of .png frames");
  ingest->add_option("--fps", fps, "Frame rate of --frames");
  ingest->add_option("--audio", audio, "PCM16 mono WAV");
  ingest->add_option("--transcript", transcript, "t_start<TAB>t_end<TAB>text lines");
  ingest->add_flag("--stop", stop_after, "End the session afterwards");

  auto* tag = app.add_subcommand("tag", "Open or close a requirement tag");
  std::string requirement, action, tag_label;
  std::optional<double> tag_t;
  tag->add_option("--session", session_id)->required();
  tag->add_option("--requirement", requirement)->required();
  tag->add_option("--action", action)->required()->check(CLI::IsMember({"open", "close"}));
  tag->add_option("--t", tag_t, "Seconds on the session timeline");
  tag->add_option("--label", tag_label);

  auto* stop = app.add_subcommand("stop", "End a session");
  stop->add_option("--session", session_id)->required();

  auto* report = app.add_subcommand("report", "Print a session report");
  std::string format = "json", log_path;
  report->add_option("--session", session_id);
  report->add_option("--log", log_path, "Replay this events.jsonl instead of the store");
  report->add_option("--format", format)->check(CLI::IsMember({"json", "markdown"}));

  auto* list = app.add_subcommand("sessions", "List sessions");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluation experiments");
  eval_cmd->require_subcommand(1);
  std::string manifest_path, scores_path, out_dir, lengths = "6,10,15,30,60", labels = "meld";
  double min_tail = 3.0;
  auto* sweep = eval_cmd->add_subcommand("sweep", "Accuracy per segment length");
  sweep->add_option("--manifest", manifest_path)->required();
  sweep->add_option("--scores", scores_path, "Playback score manifest")->required();
  sweep->add_option("--lengths", lengths);
  sweep->add_option("--min-tail", min_tail);
  sweep->add_option("--labels", labels);
  sweep->add_option("--out", out_dir)->required();
  auto* classes = eval_cmd->add_subcommand("classes", "Recall per emotion class");
  classes->add_option("--manifest", manifest_path)->required();
  classes->add_option("--scores", scores_path, "Playback score manifest")->required();
  classes->add_option("--labels", labels);
  classes->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep || *classes) {
      // Fusion settings still come from the config when one is given.
      const auto cfg = load_config(config);
      auto manifest = eval::EvalManifest::load_csv(manifest_path, label_map(labels));
      auto scores = std::make_shared<const PlaybackManifest>(PlaybackManifest::load(scores_path));
      if (*sweep) {
        eval::SweepOptions opts;
        opts.lengths = parse_lengths(lengths);
        opts.min_tail_s = min_tail;
        opts.fusion = cfg.fusion;
        PlaybackRecognizer playback({"playback", manifest_modalities(*scores),
                                     RecognizerKind::Playback, std::nullopt},
                                    scores);
        auto result = eval::run_sweep(manifest, opts, eval::recognizer_predictor(playback, cfg.fusion));
        eval::export_results(result, out_dir);
        print_summary(result);
      } else {
        auto result = eval::run_per_class(manifest, eval::playback_clip_predictor(scores, cfg.fusion));
        eval::export_results(result, out_dir);
        print_summary(result);
      }
      return 0;
    }

    if (*report && !log_path.empty()) {
      std::cout << report_from_log(log_path, *parse_report_format(format));
      return 0;
    }

    SessionManager sessions(load_config(config));

    if (*serve) {
      const auto [host, port] = parse_bind(sessions.config().bind);
      auto prober = std::make_unique<HealthProber>(
          sessions.registry(),
          std::chrono::milliseconds(static_cast<long>(sessions.config().router.probe_interval_s * 1000)));
      ApiServer server(sessions);
      server.start(host, port);
      std::cerr << "listening on " << host << ":" << server.port() << "\n";
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      sessions.wait_idle();
      return 0;
    }
    if (*create) {
      std::cout << sessions.create(name, session_id.empty() ? std::nullopt
                                                             : std::optional<std::string>(session_id))
                << "\n";
      return 0;
    }
    if (*ingest) {
      MediaSource src;
      if (!frames.empty()) src.frames_dir = frames;
      src.frames_fps = fps;
      if (!audio.empty()) src.audio = audio;
      if (!transcript.empty()) src.transcript = transcript;
      const auto known = sessions.list();
      if (std::none_of(known.begin(), known.end(),
                       [&](const SessionSummary& s) { return s.session_id == session_id; })) {
        sessions.create(name, session_id);
      }
      sessions.ingest(session_id, src);
      if (stop_after) sessions.stop(session_id);
      const auto st = sessions.get(session_id)->state();
      std::cout << session_id << ": " << st.captured.size() << " segments, " << st.scores.size()
                << " scored, " << st.failures.size() << " failed\n";
      return 0;
    }
    if (*tag) {
      auto e = sessions.tag(session_id, requirement, *parse_tag_action(action), tag_t, tag_label);
      std::cout << event_line(e) << "\n";
      return 0;
    }
    if (*stop) {
      sessions.stop(session_id);
      return 0;
    }
    if (*report) {
      if (session_id.empty()) throw Error(ErrorCode::InvalidArgument, "--session or --log is required");
      std::cout << sessions.report(session_id, *parse_report_format(format));
      return 0;
    }
    if (*list) {
      for (const auto& s : sessions.list()) std::cout << to_json(s).dump() << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
