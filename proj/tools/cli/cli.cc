// Copyright 2026 The gaterace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "gaterace/csv.h"
#include "gaterace/delta.h"
#include "gaterace/field.h"
#include "gaterace/policy.h"
#include "gaterace/rng.h"
#include "gaterace/trainer.h"
#include "run_config.h"

namespace gaterace::cli {
namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string out_dir;
};

void AddCommon(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "Run config file (defaults when omitted)");
  cmd->add_option("--set", o.sets, "Override, section.key=value (repeatable)");
  cmd->add_option("-o,--out", o.out_dir, "Output directory (overrides io.out_dir)");
}

RunConfig LoadConfig(const CommonOptions& o,
                     const std::function<void(RunConfig&)>& before_overrides = {}) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : LoadRunConfig(o.config);
  if (before_overrides) before_overrides(cfg);
  for (const auto& s : o.sets) ApplyOverride(cfg, s);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  cfg.Finalize();
  return cfg;
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::string HashComment(const RunConfig& cfg) { return "config_hash " + ConfigHash(cfg); }

void WriteResolvedConfig(const RunConfig& cfg) {
  std::ofstream out = OpenOut(cfg.out_dir + "/config.ini");
  out << "# " << HashComment(cfg) << "\n";
  WriteRunConfig(out, cfg);
}

std::string Padded(int value, int width) {
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << value;
  return s.str();
}

Checkpoint LoadKind(const std::string& path, const std::string& kind) {
  Checkpoint ckpt = LoadCheckpoint(path);
  if (ckpt.kind != kind) {
    throw IoError("checkpoint '" + path + "' holds a " + ckpt.kind + " network, expected " +
                  kind);
  }
  return ckpt;
}

std::string Fraction(int k, int n) {
  std::ostringstream s;
  s << k << "/" << n << " (" << std::fixed << std::setprecision(2)
    << (n > 0 ? static_cast<double>(k) / n : 0.0) << ")";
  return s.str();
}

std::string Fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string VecText(const Vec3& v, int digits = 4) {
  return "(" + Fixed(v.x(), digits) + ", " + Fixed(v.y(), digits) + ", " + Fixed(v.z(), digits) +
         ")";
}

int CmdTrain(const CommonOptions& common, const std::string& ablation,
             const std::string& init_policy, const std::string& delta_path,
             const std::string& eval_target, std::ostream& out) {
  const RunConfig cfg =
      LoadConfig(common, [&](RunConfig& c) { ApplyAblation(ablation, c); });
  if (eval_target != "nominal" && eval_target != "perturbed" && !eval_target.empty()) {
    throw ConfigError("--eval-target must be nominal or perturbed");
  }
  Network policy = init_policy.empty() ? Network::Init(cfg.policy, cfg.seed)
                                       : LoadKind(init_policy, "policy").net;
  std::optional<Network> delta;
  if (!delta_path.empty()) delta = LoadKind(delta_path, "delta").net;

  EnsureDir(cfg.out_dir);
  EnsureDir(cfg.out_dir + "/checkpoints");
  WriteResolvedConfig(cfg);
  const std::vector<std::string> comments = {HashComment(cfg), "ablation " + ablation};
  std::ofstream metrics = OpenOut(cfg.out_dir + "/metrics.csv");
  metrics << "# " << comments[0] << "\n# " << comments[1] << "\n";
  WriteMetricsHeader(metrics);

  TrainOptions opts;
  opts.on_metrics = [&](const MetricsRow& row) {
    WriteMetricsRow(metrics, row);
    metrics.flush();
  };
  const int every = cfg.train.eval_every;
  opts.on_checkpoint = [&](int iter, const Network& net) {
    const bool keep = iter == 0 || iter == cfg.train.iterations || (every > 0 && iter % every == 0);
    if (!keep) return;
    SaveCheckpoint(cfg.out_dir + "/checkpoints/policy_" + Padded(iter, 5) + ".ckpt",
                   {"policy", net}, comments);
  };
  const bool perturbed_eval =
      eval_target == "perturbed" || (eval_target.empty() && delta.has_value());
  TrainResult result;
  if (perturbed_eval) {
    result = FinetuneWithDelta(policy, delta ? &*delta : nullptr, cfg.Target(), cfg.train,
                               cfg.env, opts);
  } else {
    result = Train(cfg.train, cfg.env, std::move(policy), opts);
  }
  SaveCheckpoint(cfg.out_dir + "/policy.ckpt", {"policy", result.policy}, comments);

  out << "train: arm " << ablation << ", " << cfg.train.iterations << " iterations, config "
      << ConfigHash(cfg) << "\n";
  for (auto it = result.metrics.rbegin(); it != result.metrics.rend(); ++it) {
    if (!it->eval) continue;
    const EvalReport& e = *it->eval;
    out << "last eval (iter " << it->iter << "): SR " << Fraction(e.successes, e.trials)
        << "  SC " << Fraction(e.crosses, e.trials) << "  v_max " << Fixed(e.v_max, 2)
        << " m/s\n";
    break;
  }
  out << "wrote " << cfg.out_dir << "/metrics.csv and " << cfg.out_dir << "/policy.ckpt\n";
  return kExitOk;
}

int CmdEval(const CommonOptions& common, const std::string& checkpoint,
            const std::string& delta_path, int trials, const std::string& target,
            const std::string& track, int difficulty, bool trajectories, std::ostream& out) {
  RunConfig cfg = LoadConfig(common);
  if (!track.empty()) cfg.env.family = ParseTrackFamily(track);
  if (difficulty >= 0) cfg.env.difficulty = difficulty;
  if (trials >= 0) cfg.eval_trials = trials;
  if (target != "nominal" && target != "perturbed") {
    throw ConfigError("--target must be nominal or perturbed");
  }
  cfg.Finalize();
  const Checkpoint ckpt = LoadKind(checkpoint, "policy");
  std::optional<Network> delta;
  if (!delta_path.empty()) delta = LoadKind(delta_path, "delta").net;
  EnvConfig env = cfg.env;
  if (target == "perturbed") env.dynamics = cfg.Target().Plant();

  const EvalReport rep = Evaluate(ckpt.net, delta ? &*delta : nullptr, env, cfg.eval_trials,
                                  cfg.eval_horizon, cfg.eval_seed, cfg.threads);
  EnsureDir(cfg.out_dir);
  std::ofstream summary = OpenOut(cfg.out_dir + "/eval.csv");
  summary << "# " << HashComment(cfg) << "\n# checkpoint " << checkpoint << "\n";
  summary << "trial,gates_passed,collided,success,success_cross,v_max,reward\n";
  for (int i = 0; i < rep.trials; ++i) {
    const EpisodeResult& e = rep.episodes[i];
    summary << i << ',' << e.gates_passed << ',' << (e.collided ? 1 : 0) << ','
            << (e.success ? 1 : 0) << ',' << (e.success_cross ? 1 : 0) << ','
            << FormatDouble(e.v_max) << ',' << FormatDouble(e.reward) << '\n';
    if (trajectories) {
      EnsureDir(cfg.out_dir + "/trajectories");
      std::ofstream traj =
          OpenOut(cfg.out_dir + "/trajectories/trial_" + Padded(i, 3) + ".csv");
      traj << "# " << HashComment(cfg) << "\n";
      WriteTrajectoryCsv(traj, e.trajectory);
    }
  }
  out << "eval: " << TrackFamilyName(env.family) << " difficulty " << env.difficulty << ", "
      << target << " dynamics, " << rep.trials << " trials\n";
  out << "  Success Rate     " << Fraction(rep.successes, rep.trials) << "\n";
  out << "  Success Cross    " << Fraction(rep.crosses, rep.trials) << "\n";
  out << "  v_max            " << Fixed(rep.v_max, 2) << " m/s\n";
  out << "  gates/episode    " << Fixed(rep.gates_per_episode, 2) << "\n";
  out << "  mean reward      " << Fixed(rep.mean_reward, 2) << "\n";
  return kExitOk;
}

int CmdFitDelta(const CommonOptions& common, const std::string& policy_path,
                std::ostream& out) {
  const RunConfig cfg = LoadConfig(common);
  const Checkpoint policy = LoadKind(policy_path, "policy");
  const TargetDynamics target = cfg.Target();
  const std::uint64_t collect_seed = SubstreamSeed(cfg.seed, "collect");
  const TransitionDataset data = Collect(policy.net, target, cfg.env, cfg.collect_episodes,
                                         cfg.collect_horizon, collect_seed, cfg.threads);
  if (data.Transitions() == 0) throw ConfigError("fit-delta: collected dataset is empty");
  EnsureDir(cfg.out_dir);
  const std::vector<std::string> comments = {HashComment(cfg)};
  WriteDataset(cfg.out_dir + "/dataset", data, comments);

  const DeltaFitResult fit =
      FitDelta(data, Network::Init(NetArch::Delta(), cfg.seed), cfg.env.dynamics, cfg.delta);
  SaveCheckpoint(cfg.out_dir + "/delta.ckpt", {"delta", fit.delta}, comments);
  {
    std::ofstream curve = OpenOut(cfg.out_dir + "/fit_loss.csv");
    curve << "# " << comments[0] << "\nepoch,loss\n";
    for (std::size_t i = 0; i < fit.loss_curve.size(); ++i) {
      curve << i << ',' << FormatDouble(fit.loss_curve[i]) << '\n';
    }
  }

  const int holdout_episodes = std::max(1, cfg.collect_episodes / 4);
  const TransitionDataset holdout =
      Collect(policy.net, target, cfg.env, holdout_episodes, cfg.collect_horizon,
              SubstreamSeed(cfg.seed, "collect.holdout"), cfg.threads);
  const AlignmentReport with =
      EvaluateAlignment(holdout, &fit.delta, cfg.env.dynamics, cfg.delta.window);
  const AlignmentReport without =
      EvaluateAlignment(holdout, nullptr, cfg.env.dynamics, cfg.delta.window);

  std::ostringstream rep;
  rep << "fit-delta: " << data.episodes.size() << " episodes, " << data.Transitions()
      << " transitions, config " << ConfigHash(cfg) << "\n";
  rep << "  fit loss         " << FormatDouble(fit.loss_curve.front()) << " -> "
      << FormatDouble(fit.loss_curve.back()) << " (" << fit.rejected_steps
      << " rejected steps)\n";
  rep << "  mean correction  " << VecText(with.mean_correction) << " m/s^2\n";
  const Vec3 bias = target.action_bias;
  if (bias.norm() > 0.0) {
    const double err = (with.mean_correction + bias).norm() / bias.norm();
    rep << "  expected         " << VecText(-bias) << " m/s^2 (action bias " << VecText(bias)
        << ")\n";
    rep << "  bias error       " << Fixed(100.0 * err, 2) << " %\n";
  }
  rep << "  velocity RMSE    " << Fixed(with.velocity_rmse, 4) << " m/s with correction, "
      << Fixed(without.velocity_rmse, 4) << " m/s without (" << cfg.delta.window
      << "-step windows, held-out episodes)\n";
  if (target.IsNominal()) {
    rep << (with.mean_correction_norm < 0.05 ? "  null mismatch, corrections ~ 0\n"
                                             : "  null mismatch, but corrections are not ~ 0\n");
  }
  out << rep.str();
  std::ofstream report = OpenOut(cfg.out_dir + "/fit_report.txt");
  report << "# " << comments[0] << "\n" << rep.str();
  return kExitOk;
}

std::vector<double> ParseList(const std::string& text, const std::string& what) {
  std::vector<double> v;
  for (const auto& f : SplitCsvLine(text)) {
    try {
      v.push_back(ParseDouble(f, 0));
    } catch (const IoError&) {
      throw ConfigError(what + ": bad number '" + f + "'");
    }
  }
  return v;
}

int CmdFieldDump(const CommonOptions& common, const std::string& bounds_text,
                 const std::string& res_text, const std::string& file,
                 const std::string& lint, std::ostream& out) {
  const RunConfig cfg = LoadConfig(common);
  if (!lint.empty() && bounds_text.empty() && res_text.empty() && file.empty()) {
    std::ifstream in(lint);
    if (!in) throw IoError("cannot open '" + lint + "'");
    const auto rows = ReadFieldCsv(in);
    out << "field-dump: " << lint << " parses, " << rows.size() << " rows\n";
    return kExitOk;
  }
  const TrackSpec track = EpisodeTrack(cfg.env, cfg.seed, "track", 0);
  GridBounds bounds;
  if (bounds_text.empty()) {
    Vec3 lo = track.gates.front().center, hi = lo;
    for (const auto& g : track.gates) {
      lo = lo.cwiseMin(g.center);
      hi = hi.cwiseMax(g.center);
    }
    bounds.lo = lo - Vec3::Constant(2.0);
    bounds.hi = hi + Vec3::Constant(2.0);
  } else {
    const auto b = ParseList(bounds_text, "--bounds");
    if (b.size() != 6) throw ConfigError("--bounds expects x0,y0,z0,x1,y1,z1");
    bounds.lo = Vec3(b[0], b[1], b[2]);
    bounds.hi = Vec3(b[3], b[4], b[5]);
    if (!(bounds.lo.array() <= bounds.hi.array()).all()) {
      throw ConfigError("--bounds: lower corner exceeds upper corner");
    }
  }
  std::array<int, 3> res = {21, 21, 11};
  if (!res_text.empty()) {
    const auto r = ParseList(res_text, "--res");
    if (r.size() != 1 && r.size() != 3) throw ConfigError("--res expects N or nx,ny,nz");
    for (int i = 0; i < 3; ++i) {
      const double x = r.size() == 1 ? r[0] : r[i];
      if (x != std::floor(x) || x < 2) throw ConfigError("--res entries must be integers >= 2");
      res[i] = static_cast<int>(x);
    }
  }
  const auto rows = DumpGrid(track.gates, cfg.env.field, bounds, res);
  const std::string path = file.empty() ? cfg.out_dir + "/field.csv" : file;
  if (file.empty()) EnsureDir(cfg.out_dir);
  {
    std::ofstream csv = OpenOut(path);
    csv << "# " << HashComment(cfg) << "\n";
    WriteFieldCsv(csv, rows);
  }
  std::size_t singular = 0;
  for (const auto& r : rows) singular += r.singular ? 1 : 0;
  out << "field-dump: " << rows.size() << " rows (" << res[0] << "x" << res[1] << "x" << res[2]
      << ", " << track.gates.size() << " gates, " << singular << " on a wire) -> " << path
      << "\n";
  if (!lint.empty()) {
    std::ifstream in(lint);
    if (!in) throw IoError("cannot open '" + lint + "'");
    const auto parsed = ReadFieldCsv(in);
    if (parsed.size() != rows.size() && lint == path) {
      throw IoError("field-dump lint: row count mismatch");
    }
    out << "field-dump: " << lint << " parses, " << parsed.size() << " rows\n";
  }
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gate-racing policy training with differentiable dynamics", "gaterace"};
  app.require_subcommand(1);

  CommonOptions train_common, eval_common, fit_common, field_common;

  CLI::App* train = app.add_subcommand("train", "Train a policy");
  AddCommon(train, train_common);
  std::string ablation = "avf", init_policy, train_delta, eval_target;
  train->add_option("--ablation", ablation, "avf | no-avf-lp | no-avf-lpnorm | scalar-proj")
      ->check(CLI::IsMember({"avf", "no-avf-lp", "no-avf-lpnorm", "scalar-proj"}));
  train->add_option("--init-policy", init_policy, "Start from this policy checkpoint");
  train->add_option("--delta", train_delta, "Frozen correction network (fine-tuning)");
  train->add_option("--eval-target", eval_target,
                    "Dynamics for periodic evaluation: nominal | perturbed");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  AddCommon(eval, eval_common);
  std::string checkpoint, eval_delta, target = "nominal", track;
  int trials = -1, difficulty = -1;
  bool no_traj = false;
  eval->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required();
  eval->add_option("--delta", eval_delta, "Correction network added to the actions");
  eval->add_option("--trials", trials, "Number of seeded trials (overrides eval.trials)");
  eval->add_option("--target", target, "nominal | perturbed");
  eval->add_option("--track", track, "zigzag | circular | ellipse");
  eval->add_option("--difficulty", difficulty, "Obstacle level 0-9");
  eval->add_flag("--no-trajectories", no_traj, "Skip per-trial trajectory CSVs");

  CLI::App* fit = app.add_subcommand("fit-delta", "Collect target data and fit a correction");
  AddCommon(fit, fit_common);
  std::string policy_path;
  fit->add_option("--policy", policy_path, "Policy checkpoint used for collection")->required();

  CLI::App* field = app.add_subcommand("field-dump", "Sample the gate field on a grid");
  AddCommon(field, field_common);
  std::string bounds, res, file, lint;
  field->add_option("--bounds", bounds, "x0,y0,z0,x1,y1,z1");
  field->add_option("--res", res, "N or nx,ny,nz (>= 2)");
  field->add_option("--file", file, "Output CSV (default <out>/field.csv)");
  field->add_option("--lint", lint, "Re-parse a field CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (train->parsed()) {
      return CmdTrain(train_common, ablation, init_policy, train_delta, eval_target, out);
    }
    if (eval->parsed()) {
      return CmdEval(eval_common, checkpoint, eval_delta, trials, target, track, difficulty,
                     !no_traj, out);
    }
    if (fit->parsed()) return CmdFitDelta(fit_common, policy_path, out);
    if (field->parsed()) return CmdFieldDump(field_common, bounds, res, file, lint, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace gaterace::cli
