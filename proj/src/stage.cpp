// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/stage.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "c2f/ctc.hpp"
#include "json.hpp"

namespace c2f {

namespace fs = std::filesystem;

void StageSpec::validate() const {
  if (name.empty()) throw Error("stage needs a name");
  if (freeze_steps > steps) throw Error("stage '" + name + "': freeze_steps exceeds steps");
  if (!(base_lr > 0)) throw Error("stage '" + name + "': learning rate must be positive");
  if (batch_size == 0) throw Error("stage '" + name + "': batch size must be positive");
  if (steps > 0 && train_manifest.empty()) throw Error("stage '" + name + "': no training manifest");
  if (init.kind == InitSpec::Kind::kCheckpoint && init.checkpoint.empty())
    throw Error("stage '" + name + "': no checkpoint path");
  if (init.kind == InitSpec::Kind::kStage && init.from_stage.empty())
    throw Error("stage '" + name + "': no source stage");
  optim.validate();
  if (augment) cutout.validate();
}

namespace {

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); }

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  return std::to_string(row.step) + "," + fmt_opt(row.loss) + "," + fmt_opt(row.lr) + "," + fmt_opt(row.wer) + "," +
         fmt_opt(row.cer) + "," + fmt_opt(row.wall_s);
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

Model init_stage_model(const StageSpec& spec, const std::map<std::string, fs::path>& produced) {
  const Alphabet alphabet = Alphabet::from_name(spec.alphabet);
  const ModelConfig cfg = ModelConfig::from_preset(spec.preset, static_cast<int>(alphabet.num_labels()));
  const CounterRng rng(spec.seed, "init:" + spec.name);
  switch (spec.init.kind) {
    case InitSpec::Kind::kScratch:
      return build_model(cfg, alphabet, rng);
    case InitSpec::Kind::kCheckpoint:
      return transfer_init(cfg, load_checkpoint(spec.init.checkpoint), spec.init.policy, alphabet, rng);
    case InitSpec::Kind::kStage: {
      auto it = produced.find(spec.init.from_stage);
      if (it == produced.end())
        throw Error("stage '" + spec.name + "' starts from '" + spec.init.from_stage + "', which has not run");
      return transfer_init(cfg, load_checkpoint(it->second), spec.init.policy, alphabet, rng);
    }
  }
  throw Error("unknown init kind");
}

StageResult run_stage(const StageSpec& spec, Model model, const RunOptions& opts) {
  spec.validate();
  const Alphabet alphabet = Alphabet::from_name(spec.alphabet);
  if (!(model.alphabet() == alphabet)) throw Error("stage '" + spec.name + "': model alphabet differs from the stage's");
  fs::create_directories(opts.out_dir);
  auto say = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };

  StageResult res{std::move(model)};
  res.checkpoint = opts.out_dir / (spec.name + ".ckpt");
  res.metrics_csv = opts.out_dir / (spec.name + ".csv");
  const fs::path last_good = opts.out_dir / (spec.name + ".last_good.ckpt");
  Model& m = res.model;
  OptimState state;

  if (spec.steps == 0) {
    set_trainable(m, PartitionSelector::kAll, true);
    save_checkpoint(m, &state, spec.name, res.checkpoint);
    write_metrics_csv(res.metrics_csv, res.rows);
    return res;
  }

  const Dataset train = Dataset::load(spec.train_manifest, alphabet, opts.frontend);
  std::optional<Dataset> eval;
  if (!spec.eval_manifest.empty()) eval = Dataset::load(spec.eval_manifest, alphabet, opts.frontend);

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&]() -> std::optional<double> {
    if (!opts.record_wall_time) return std::nullopt;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto run_eval = [&](MetricsRow& row) -> std::optional<EvalResult> {
    if (!eval) return std::nullopt;
    EvalResult r = evaluate(m, *eval, spec.batch_size);
    row.wer = r.wer;
    row.cer = r.cer;
    say(spec.name + " step " + std::to_string(row.step) + ": wer=" + fmt_num(r.wer) + " cer=" + fmt_num(r.cer));
    return r;
  };

  set_trainable(m, PartitionSelector::kAll, true);
  m.mode = Mode::kTrain;
  {
    MetricsRow row{m.step};
    res.initial = run_eval(row);
    if (res.initial) {
      row.wall_s = wall();
      res.rows.push_back(row);
    }
  }
  save_checkpoint(m, &state, spec.name, last_good);
  if (opts.on_step) opts.on_step({spec, 0, spec.freeze_steps > 0, m});

  BatchingOptions bopts;
  bopts.batch_size = spec.batch_size;
  bopts.seed = splitmix64(spec.seed ^ fnv1a64(spec.name));
  bopts.training = true;
  bopts.augment = spec.augment;
  bopts.cutout = spec.cutout;
  std::vector<Batch> batches = make_batches(train, bopts);
  std::size_t next_batch = 0;

  for (std::uint64_t s = 1; s <= spec.steps; ++s) {
    const bool frozen = s <= spec.freeze_steps;
    set_trainable(m, PartitionSelector::kEncoder, !frozen);
    if (next_batch == batches.size()) {
      ++bopts.epoch;
      batches = make_batches(train, bopts);
      next_batch = 0;
    }
    const Batch& batch = batches[next_batch++];

    ForwardCache<float> cache;
    const SequenceBatch<float> logits = forward(m, batch.features, &cache);
    bool finite = true;
    for (float v : logits.data) finite = finite && std::isfinite(v);
    double loss = std::numeric_limits<double>::quiet_NaN();
    SequenceBatch<float> dlogits;
    if (finite) loss = ctc_loss(logits, batch.targets, &dlogits);
    auto diverged = [&] {
      return Error("stage '" + spec.name + "' diverged at step " + std::to_string(s) + "; last good checkpoint: " +
                   last_good.string());
    };
    if (!std::isfinite(loss)) throw diverged();
    const GradientBag<float> grads = backward(m, cache, dlogits);
    for (const auto& [name, g] : grads)
      for (float v : g)
        if (!std::isfinite(v)) throw diverged();
    const double lr = lr_at_step(spec.optim, s, spec.base_lr);
    novograd_step(m, grads, state, spec.optim, lr);
    ++m.step;

    MetricsRow row{m.step, loss, lr};
    const bool end_of_freeze = spec.freeze_steps > 0 && s == spec.freeze_steps;
    const bool periodic = spec.eval_every > 0 && s % spec.eval_every == 0;
    if (periodic || end_of_freeze || s == spec.steps) {
      auto r = run_eval(row);
      if (end_of_freeze) res.after_freeze = r;
      if (s == spec.steps) res.final = r;
      save_checkpoint(m, &state, spec.name, last_good);
    }
    row.wall_s = wall();
    res.rows.push_back(row);
    if (opts.on_step) opts.on_step({spec, s, frozen, m});
  }

  set_trainable(m, PartitionSelector::kAll, true);
  save_checkpoint(m, &state, spec.name, res.checkpoint);
  write_metrics_csv(res.metrics_csv, res.rows);
  fs::remove(last_good);
  return res;
}

// ---------------------------------------------------------------------------
// Plans

PlanPreset plan_preset_from_name(std::string_view name) {
  if (name == "baseline-cs" || name == "baseline_cs") return PlanPreset::kBaselineCs;
  if (name == "en-cs" || name == "en_cs") return PlanPreset::kEnCs;
  if (name == "en-simcs-cs" || name == "en_simcs_cs") return PlanPreset::kEnSimCsCs;
  if (name == "simcs-cs" || name == "simcs_cs") return PlanPreset::kSimCsCs;
  throw Error("unknown plan preset '" + std::string(name) + "'");
}

std::string to_string(PlanPreset preset) {
  switch (preset) {
    case PlanPreset::kBaselineCs:
      return "baseline-cs";
    case PlanPreset::kEnCs:
      return "en-cs";
    case PlanPreset::kEnSimCsCs:
      return "en-simcs-cs";
    case PlanPreset::kSimCsCs:
      return "simcs-cs";
  }
  return "?";
}

StagePlan preset_plan(PlanPreset preset, const PlanData& data, std::uint64_t seed, const PlanBudget& budget) {
  const OptimConfig base_optim = [&] {
    OptimConfig o;
    o.warmup_steps = budget.warmup_steps;
    return o;
  }();
  auto stage = [&](std::string name, std::string alphabet, std::uint64_t steps, double lr) {
    StageSpec s;
    s.name = std::move(name);
    s.alphabet = std::move(alphabet);
    s.seed = seed;
    s.steps = steps;
    s.base_lr = lr;
    s.optim = base_optim;
    s.optim.schedule = budget.schedule;
    s.optim.total_steps = steps;
    s.batch_size = budget.batch_size;
    s.augment = budget.augment;
    s.cutout = budget.cutout;
    s.eval_every = budget.eval_every;
    return s;
  };
  auto from = [](std::string src, TransferPolicy policy) {
    InitSpec init;
    init.kind = InitSpec::Kind::kStage;
    init.from_stage = std::move(src);
    init.policy = policy;
    return init;
  };
  const std::uint64_t cs_steps = budget.adapt_steps + budget.full_steps;
  auto parent = [&] {
    StageSpec s = stage("en", "english", budget.parent_steps, budget.train_lr);
    s.train_manifest = data.parent_train;
    s.eval_manifest = data.parent_eval;
    return s;
  };
  auto adapted_cs = [&](std::string src) {
    StageSpec s = stage("cs", "czech", cs_steps, budget.finetune_lr);
    s.init = from(std::move(src), TransferPolicy::kEncoderOnly);
    s.freeze_steps = budget.adapt_steps;
    s.train_manifest = data.cs_train;
    s.eval_manifest = data.cs_eval;
    return s;
  };
  auto simplified = [&](double lr) {
    StageSpec s = stage("simcs", "czech-simplified", budget.simplified_steps, lr);
    s.train_manifest = data.simcs_train;
    s.eval_manifest = data.simcs_eval;
    return s;
  };

  StagePlan plan;
  plan.name = to_string(preset);
  switch (preset) {
    case PlanPreset::kBaselineCs: {
      StageSpec s = stage("cs", "czech", cs_steps, budget.train_lr);
      s.train_manifest = data.cs_train;
      s.eval_manifest = data.cs_eval;
      plan.stages = {s};
      break;
    }
    case PlanPreset::kEnCs:
      plan.stages = {parent(), adapted_cs("en")};
      break;
    case PlanPreset::kEnSimCsCs: {
      StageSpec sim = simplified(budget.finetune_lr);
      sim.init = from("en", TransferPolicy::kAll);
      plan.stages = {parent(), sim, adapted_cs("simcs")};
      break;
    }
    case PlanPreset::kSimCsCs:
      plan.stages = {simplified(budget.train_lr), adapted_cs("simcs")};
      break;
  }
  return plan;
}

PlanData prepare_synthetic_data(const fs::path& dir, std::uint64_t seed, const SynthDataOptions& opts) {
  SynthConfig parent_cfg;
  parent_cfg.base_symbols = "bfghklmp";
  parent_cfg.accented_symbols = "";
  parent_cfg.noise_std = opts.noise_std;
  SynthConfig cs_cfg;
  cs_cfg.noise_std = opts.noise_std;
  auto corpus_seed = [&](std::string_view purpose) { return splitmix64(seed ^ fnv1a64(purpose)); };

  PlanData d;
  d.parent_train = synth_corpus(parent_cfg, opts.n_train, corpus_seed("parent-train"), dir / "parent", "train");
  d.parent_eval = synth_corpus(parent_cfg, opts.n_eval, corpus_seed("parent-eval"), dir / "parent", "eval");
  d.cs_train = synth_corpus(cs_cfg, opts.n_train, corpus_seed("cs-train"), dir / "cs", "train");
  d.cs_eval = synth_corpus(cs_cfg, opts.n_eval, corpus_seed("cs-eval"), dir / "cs", "eval");
  d.simcs_train = dir / "cs" / "train.simplified.jsonl";
  d.simcs_eval = dir / "cs" / "eval.simplified.jsonl";
  simplify_manifest(d.cs_train, d.simcs_train);
  simplify_manifest(d.cs_eval, d.simcs_eval);
  return d;
}

// ---------------------------------------------------------------------------
// Plan files

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("expected a boolean, got '" + v + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

StagePlan parse_plan(const fs::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(std::string("cannot parse plan: ") + e.what());
  }
  const fs::path base = path.parent_path();
  StagePlan plan;
  plan.name = path.stem().string();
  for (const auto& [section, body] : tree) {
    if (section == "plan") {
      plan.name = body.get<std::string>("name", plan.name);
      continue;
    }
    if (!section.starts_with("stage ")) throw Error("unknown plan section [" + section + "]");
    StageSpec s;
    s.name = section.substr(6);
    try {
      for (const auto& [key, node] : body) {
        const std::string v = node.data();
        if (key == "init") {
          if (v == "scratch") {
            s.init.kind = InitSpec::Kind::kScratch;
          } else if (v.starts_with("stage:")) {
            s.init.kind = InitSpec::Kind::kStage;
            s.init.from_stage = v.substr(6);
          } else if (v.starts_with("checkpoint:")) {
            s.init.kind = InitSpec::Kind::kCheckpoint;
            s.init.checkpoint = resolve(base, v.substr(11));
          } else {
            throw Error("init must be scratch, stage:<name> or checkpoint:<path>");
          }
        } else if (key == "policy") {
          s.init.policy = transfer_policy_from_name(v);
        } else if (key == "alphabet") {
          s.alphabet = v;
        } else if (key == "preset") {
          s.preset = v;
        } else if (key == "seed") {
          s.seed = std::stoull(v);
        } else if (key == "steps") {
          s.steps = std::stoull(v);
        } else if (key == "freeze_steps") {
          s.freeze_steps = std::stoull(v);
        } else if (key == "lr") {
          s.base_lr = std::stod(v);
        } else if (key == "warmup_steps") {
          s.optim.warmup_steps = std::stoull(v);
        } else if (key == "schedule") {
          s.optim.schedule = v == "cosine" ? LrSchedule::kCosine : LrSchedule::kConstant;
          s.optim.total_steps = s.steps;
        } else if (key == "batch_size") {
          s.batch_size = std::stoull(v);
        } else if (key == "augment") {
          s.augment = parse_bool(v);
        } else if (key == "cutout_masks") {
          s.cutout.n_masks = std::stoi(v);
        } else if (key == "cutout_time") {
          s.cutout.max_time = std::stoi(v);
        } else if (key == "cutout_freq") {
          s.cutout.max_freq = std::stoi(v);
        } else if (key == "train_manifest") {
          s.train_manifest = resolve(base, v);
        } else if (key == "eval_manifest") {
          s.eval_manifest = resolve(base, v);
        } else if (key == "eval_every") {
          s.eval_every = std::stoull(v);
        } else {
          throw Error("unknown key '" + key + "'");
        }
      }
    } catch (const std::logic_error& e) {
      throw Error(path.string() + " [" + section + "]: bad value (" + e.what() + ")");
    } catch (const Error& e) {
      throw Error(path.string() + " [" + section + "]: " + e.what());
    }
    if (s.optim.schedule == LrSchedule::kCosine) s.optim.total_steps = s.steps;
    s.validate();
    plan.stages.push_back(std::move(s));
  }
  if (plan.stages.empty()) throw Error(path.string() + ": plan has no stages");
  return plan;
}

std::string plan_to_text(const StagePlan& plan) {
  std::ostringstream out;
  out << "[plan]\nname = " << plan.name << "\n";
  for (const auto& s : plan.stages) {
    out << "\n[stage " << s.name << "]\n";
    switch (s.init.kind) {
      case InitSpec::Kind::kScratch:
        out << "init = scratch\n";
        break;
      case InitSpec::Kind::kStage:
        out << "init = stage:" << s.init.from_stage << "\npolicy = " << to_string(s.init.policy) << "\n";
        break;
      case InitSpec::Kind::kCheckpoint:
        out << "init = checkpoint:" << s.init.checkpoint.string() << "\npolicy = " << to_string(s.init.policy)
            << "\n";
        break;
    }
    out << "alphabet = " << s.alphabet << "\npreset = " << s.preset << "\nseed = " << s.seed
        << "\nsteps = " << s.steps << "\nfreeze_steps = " << s.freeze_steps << "\nlr = " << fmt_num(s.base_lr)
        << "\nwarmup_steps = " << s.optim.warmup_steps
        << "\nschedule = " << (s.optim.schedule == LrSchedule::kCosine ? "cosine" : "constant")
        << "\nbatch_size = " << s.batch_size << "\naugment = " << (s.augment ? "true" : "false")
        << "\ncutout_masks = " << s.cutout.n_masks << "\ncutout_time = " << s.cutout.max_time
        << "\ncutout_freq = " << s.cutout.max_freq << "\ntrain_manifest = " << s.train_manifest.string()
        << "\neval_manifest = " << s.eval_manifest.string() << "\neval_every = " << s.eval_every << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Reports

namespace {

nlohmann::ordered_json eval_json(const std::optional<EvalResult>& r) {
  if (!r) return nullptr;
  return {{"wer", r->wer}, {"cer", r->cer}, {"n_utts", r->n_utts}, {"ref_words", r->ref_words},
          {"ref_chars", r->ref_chars}};
}

std::string pct(const std::optional<EvalResult>& r) {
  if (!r) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * r->wer);
  return buf;
}

}  // namespace

std::string PlanReport::to_json() const {
  nlohmann::ordered_json j;
  j["plan"] = plan;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : stages)
    j["stages"].push_back({{"name", s.name},
                           {"alphabet", s.alphabet},
                           {"initial", eval_json(s.initial)},
                           {"after_freeze", eval_json(s.after_freeze)},
                           {"final", eval_json(s.final)},
                           {"checkpoint", s.checkpoint.filename().string()},
                           {"metrics_csv", s.metrics_csv.filename().string()}});
  return j.dump(2) + "\n";
}

std::string PlanReport::to_table() const {
  std::optional<EvalResult> simplified, adaptation, full;
  for (const auto& s : stages)
    if (s.alphabet == "czech-simplified" || s.alphabet == "czech_simplified") simplified = s.final;
  if (!stages.empty()) {
    adaptation = stages.back().after_freeze;
    full = stages.back().final;
  }
  std::ostringstream out;
  out << "experiment\tsimplified\tadaptation\tfull (WER %)\n";
  out << plan << "\t" << pct(simplified) << "\t" << pct(adaptation) << "\t" << pct(full) << "\n";
  return out.str();
}

PlanReport run_plan(const StagePlan& plan, const RunOptions& opts) {
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& s = plan.stages[i];
    if (s.init.kind != InitSpec::Kind::kStage) continue;
    bool earlier = false;
    for (std::size_t j = 0; j < i; ++j) earlier = earlier || plan.stages[j].name == s.init.from_stage;
    if (!earlier) throw Error("stage '" + s.name + "' depends on '" + s.init.from_stage + "', which does not precede it");
  }
  PlanReport report;
  report.plan = plan.name;
  std::map<std::string, fs::path> produced;
  for (const auto& spec : plan.stages) {
    if (opts.log) opts.log("stage " + spec.name + " (" + spec.alphabet + ", " + std::to_string(spec.steps) + " steps)");
    StageResult r = run_stage(spec, init_stage_model(spec, produced), opts);
    produced[spec.name] = r.checkpoint;
    report.stages.push_back({spec.name, spec.alphabet, r.initial, r.after_freeze, r.final, r.checkpoint, r.metrics_csv});
  }
  return report;
}

}  // namespace c2f
