#include "aeckit/cli.hpp"

#include <charconv>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aeckit/audio.hpp"
#include "aeckit/error.hpp"
#include "aeckit/eval.hpp"
#include "aeckit/model.hpp"
#include "aeckit/parallel.hpp"
#include "aeckit/pipeline.hpp"
#include "aeckit/service.hpp"
#include "aeckit/synthdata.hpp"
#include "aeckit/training.hpp"

namespace aeckit::cli {
namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

ModelConfig load_config(const std::string& path, ModelConfig base) {
  if (path.empty()) return base;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  from_json(j, base);
  base.validate();
  return base;
}

// Entries [0, n - holdout) for training, the rest for evaluation.
std::span<const synth::ManifestEntry> split(const synth::DatasetManifest& m, std::size_t holdout, bool tail) {
  if (holdout > m.entries.size())
    throw Error(ErrorCode::InvalidArgument, "holdout " + std::to_string(holdout) + " exceeds " +
                                                std::to_string(m.entries.size()) + " entries");
  const std::span<const synth::ManifestEntry> all(m.entries);
  const std::size_t cut = all.size() - holdout;
  return tail ? all.subspan(cut) : all.subspan(0, cut);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

HttpServer* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Echo/other-degradation MOS toolkit", "aeckit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);

  std::uint64_t seed = 0;
  std::string config_path;
  bool quiet = false;
  app.add_option("--seed", seed, "Seed for data generation, initialisation and shuffling");
  app.add_option("--config", config_path, "JSON file overriding model/STFT settings")->check(CLI::ExistingFile);
  app.add_flag("--quiet", quiet, "Suppress progress output");

  // datagen
  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic rated corpus");
  std::size_t n_clips = 100;
  std::string out_dir, mix_text = "0.456,0.267,0.277", aecs_text;
  double min_dur = 3.0, max_dur = 14.5;
  datagen->add_option("--n", n_clips, "Number of clips")->check(CLI::PositiveNumber);
  datagen->add_option("--out", out_dir, "Output directory")->required();
  datagen->add_option("--mix", mix_text, "Scenario mix nst,fst,dt");
  datagen->add_option("--aecs", aecs_text, "Roster id:suppression_db:distortion,...");
  datagen->add_option("--min-dur", min_dur, "Minimum clip duration (s)");
  datagen->add_option("--max-dur", max_dur, "Maximum clip duration (s)");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a manifest");
  std::string manifest_path, ckpt_out;
  std::size_t epochs = 10, batch = 10, holdout = 0;
  double lr = 1e-3;
  bool augment = false;
  train->add_option("--manifest", manifest_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out-ckpt", ckpt_out, "Checkpoint output path")->required();
  train->add_option("--epochs", epochs, "Epochs");
  train->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);
  train->add_flag("--augment", augment, "Apply micro augmentations");
  train->add_option("--holdout", holdout, "Leave out the last N manifest entries");

  // score
  auto* score_cmd = app.add_subcommand("score", "Score one (near, far, enhanced) triple");
  std::string ckpt_path, near_path, far_path, enh_path, scenario_text;
  score_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  score_cmd->add_option("--near", near_path, "Near-end microphone WAV")->required();
  score_cmd->add_option("--far", far_path, "Far-end WAV")->required();
  score_cmd->add_option("--enhanced", enh_path, "Echo canceller output WAV")->required();
  score_cmd->add_option("--scenario", scenario_text, "nst|fst|dt")->check(CLI::IsMember({"nst", "fst", "dt"}));

  // eval / rank
  std::string report_path;
  std::size_t eval_holdout = 0;
  const auto add_eval_flags = [&](CLI::App* cmd) {
    cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--report", report_path, "Report path (JSON; CSV written next to it)")->required();
    cmd->add_option("--holdout", eval_holdout, "Evaluate only the last N manifest entries (0 = all)");
  };
  auto* eval_cmd = app.add_subcommand("eval", "Per-clip and per-model agreement with the oracle");
  add_eval_flags(eval_cmd);
  auto* rank_cmd = app.add_subcommand("rank", "Rank the echo cancellers in a manifest");
  add_eval_flags(rank_cmd);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass (tiny config)");
  GradCheckOptions gopts;
  grad->add_option("--frames", gopts.frames, "Probe frames");
  grad->add_option("--min-checked", gopts.min_checked, "Minimum checked parameters");
  grad->add_option("--tolerance", gopts.tolerance, "Relative error tolerance");
  bool no_gru = false;
  grad->add_flag("--no-gru", no_gru, "Check the ablated head");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP scoring service");
  std::string host = "0.0.0.0";
  int port = 8080;
  std::size_t max_body = kMaxRequestBody;
  serve->add_option("--ckpt", ckpt_path, "Checkpoint (optional; /score returns 503 without one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--max-body", max_body, "Request body limit in bytes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    configure_threads_from_env();
    const auto progress = [&](const std::string& line) {
      if (!quiet) out << line << '\n';
    };

    if (*datagen) {
      synth::DatasetOptions opts;
      opts.n_clips = n_clips;
      opts.mix = synth::parse_mix(mix_text);
      if (!aecs_text.empty()) opts.roster = synth::parse_roster(aecs_text);
      opts.out_dir = out_dir;
      opts.seed = seed;
      opts.min_duration_s = min_dur;
      opts.max_duration_s = max_dur;
      const auto manifest = synth::build_dataset(opts);
      const auto c = manifest.counts();
      progress("wrote " + std::to_string(manifest.entries.size()) + " clips (nst=" + std::to_string(c[0]) +
               " fst=" + std::to_string(c[1]) + " dt=" + std::to_string(c[2]) + ") to " + out_dir);
    } else if (*train) {
      ModelConfig cfg = load_config(config_path, ModelConfig{});
      cfg.seed = seed;
      auto ckpt = init_model(cfg);
      const auto manifest = synth::load_manifest(manifest_path);
      const auto entries = split(manifest, holdout, false);
      std::vector<LabeledRequest> data;
      data.reserve(entries.size());
      for (const auto& e : entries) data.push_back({synth::load_request(manifest, e, true), e.oracle});
      TrainOptions topts;
      topts.epochs = epochs;
      topts.lr = lr;
      topts.batch = batch;
      topts.augment = augment;
      topts.seed = seed;
      topts.on_epoch = [&](const EpochStats& s) {
        progress("epoch " + std::to_string(s.epoch) + " loss " + shortest(s.mean_loss));
      };
      train_model(ckpt, data, topts);
      save_checkpoint(ckpt, ckpt_out);
      progress("saved " + ckpt_out);
    } else if (*score_cmd) {
      const auto ckpt = load_checkpoint(ckpt_path);
      ScoringRequest req{read_wav(near_path), read_wav(far_path), read_wav(enh_path), std::nullopt};
      if (!scenario_text.empty()) req.scenario = scenario_from_string(scenario_text);
      const auto mos = score(ckpt, req);
      out << "echo_mos=" << shortest(mos.echo_mos) << " other_mos=" << shortest(mos.other_mos) << '\n';
    } else if (*eval_cmd || *rank_cmd) {
      const auto ckpt = load_checkpoint(ckpt_path);
      auto manifest = synth::load_manifest(manifest_path);
      // 0 evaluates the whole manifest.
      const auto picked = eval_holdout == 0 ? std::span<const synth::ManifestEntry>(manifest.entries)
                                            : split(manifest, eval_holdout, true);
      std::vector<synth::ManifestEntry> kept(picked.begin(), picked.end());
      manifest.entries = std::move(kept);
      std::vector<ScoringRequest> requests;
      requests.reserve(manifest.entries.size());
      for (const auto& e : manifest.entries) requests.push_back(synth::load_request(manifest, e, true));
      const auto scores = score_all(ckpt, requests);
      std::map<std::string, MosPair> predictions;
      for (std::size_t i = 0; i < scores.size(); ++i) predictions[manifest.entries[i].id] = scores[i];
      const auto report = eval::rank_models(manifest, predictions);

      const std::filesystem::path json_path(report_path);
      auto csv_path = json_path;
      csv_path.replace_extension(".csv");
      write_text(json_path, eval::to_json(report).dump(2) + "\n");
      write_text(csv_path, eval::to_csv(report));

      const auto fmt = [](const eval::Correlation& c) { return c ? shortest(*c) : std::string("undefined"); };
      if (*eval_cmd) {
        out << "per_clip_pcc_echo=" << fmt(report.per_clip_pcc.echo)
            << " per_clip_pcc_other=" << fmt(report.per_clip_pcc.other) << '\n';
      }
      if (*rank_cmd) {
        std::vector<std::pair<std::string, eval::ModelMeans>> rows(report.model_means.begin(),
                                                                    report.model_means.end());
        std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
          return a.second.predicted.echo_mos > b.second.predicted.echo_mos;
        });
        for (std::size_t i = 0; i < rows.size(); ++i)
          out << (i + 1) << ' ' << rows[i].first << " predicted_echo=" << shortest(rows[i].second.predicted.echo_mos)
              << " oracle_echo=" << shortest(rows[i].second.oracle.echo_mos) << '\n';
      }
      out << "per_model_srcc_echo=" << fmt(report.per_model_srcc.echo)
          << " per_model_srcc_other=" << fmt(report.per_model_srcc.other) << '\n';
    } else if (*grad) {
      ModelConfig cfg = load_config(config_path, tiny_config());
      if (no_gru) cfg.use_gru = false;
      gopts.seed = seed;
      const auto rep = gradient_check(cfg, gopts);
      out << "checked=" << rep.checked << " skipped=" << rep.skipped_kinks << " max_rel_err=" << shortest(rep.max_rel_err)
          << " worst=" << rep.worst_parameter << " tolerance=" << shortest(gopts.tolerance) << ' '
          << (rep.passed ? "PASS" : "FAIL") << '\n';
      return rep.passed ? kExitOk : kExitRuntime;
    } else if (*serve) {
      std::optional<Checkpoint> ckpt;
      if (!ckpt_path.empty()) ckpt = load_checkpoint(ckpt_path);
      const ScoringService service(std::move(ckpt), max_body);
      HttpServer server(service);
      const int bound = server.bind(host, port);
      progress("listening on " + host + ":" + std::to_string(bound) +
               (service.checkpoint_loaded() ? " model " + service.model_version() : " without checkpoint"));
      out.flush();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace aeckit::cli
