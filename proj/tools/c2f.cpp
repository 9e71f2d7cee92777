// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

// c2f: synth | simplify | train | plan | eval | decode | inspect

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "c2f/checkpoint.hpp"
#include "c2f/data.hpp"
#include "c2f/metrics.hpp"
#include "c2f/stage.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw c2f::Error("cannot write " + path.string());
}

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coarse-to-fine CTC speech recognition"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out;
  std::string ckpt;
  std::string manifest;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::size_t n_utts = 200;
  std::string name = "train";
  std::string language = "target";
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--seed", seed);
  synth->add_option("--utts", n_utts, "number of utterances");
  synth->add_option("--name", name, "manifest/file stem");
  double noise_std = c2f::SynthConfig{}.noise_std;
  synth->add_option("--noise", noise_std, "Gaussian noise std");
  synth->add_option("--language", language, "target | base | parent")
      ->check(CLI::IsMember({"target", "base", "parent"}));

  auto* simplify = app.add_subcommand("simplify", "strip diacritics from a manifest's transcripts");
  simplify->add_option("--manifest", manifest)->required();
  simplify->add_option("--out", out, "output manifest")->required();

  auto* train = app.add_subcommand("train", "run one stage, or every stage of --config");
  c2f::StageSpec spec;
  std::string config;
  std::string eval_manifest;
  std::string policy = "encoder_only";
  bool no_augment = false;
  train->add_option("--config", config, "plan file");
  train->add_option("--name", spec.name);
  train->add_option("--seed", seed);
  train->add_option("--manifest", manifest, "training manifest");
  train->add_option("--eval-manifest", eval_manifest);
  train->add_option("--alphabet", spec.alphabet)->check(CLI::IsMember({"english", "czech", "czech-simplified"}));
  train->add_option("--preset", spec.preset)->check(CLI::IsMember({"quartznet15x5", "micro"}));
  train->add_option("--steps", spec.steps);
  train->add_option("--freeze-steps", spec.freeze_steps);
  train->add_option("--lr", spec.base_lr);
  train->add_option("--warmup", spec.optim.warmup_steps);
  train->add_option("--batch-size", spec.batch_size);
  train->add_option("--eval-every", spec.eval_every);
  train->add_option("--ckpt", ckpt, "initialize from this checkpoint");
  train->add_option("--policy", policy, "all | encoder_only")->check(CLI::IsMember({"all", "encoder_only"}));
  train->add_flag("--no-augment", no_augment);
  train->add_option("--out", out, "output directory")->required();

  auto* plan = app.add_subcommand("plan", "run a staged training preset");
  std::string preset_name;
  std::string data_dir;
  c2f::PlanBudget budget;
  c2f::SynthDataOptions data_opts;
  plan->add_option("preset", preset_name, "baseline-cs | en-cs | en-simcs-cs | simcs-cs")
      ->required()
      ->check(CLI::IsMember({"baseline-cs", "en-cs", "en-simcs-cs", "simcs-cs"}));
  plan->add_option("--seed", seed);
  plan->add_option("--out", out, "output directory (default runs/<preset>-<seed>)");
  plan->add_option("--data", data_dir, "synthetic data directory (default <out>/data)");
  plan->add_option("--parent-steps", budget.parent_steps);
  plan->add_option("--simplified-steps", budget.simplified_steps);
  plan->add_option("--freeze-steps", budget.adapt_steps);
  plan->add_option("--steps", budget.full_steps, "full-alphabet steps after adaptation");
  plan->add_option("--eval-every", budget.eval_every);
  plan->add_option("--lr", budget.train_lr, "learning rate of stages trained from scratch");
  plan->add_option("--finetune-lr", budget.finetune_lr, "learning rate of transferred stages");
  plan->add_option("--schedule", budget.schedule, "constant | cosine")
      ->transform(CLI::CheckedTransformer(std::map<std::string, c2f::LrSchedule>{
          {"constant", c2f::LrSchedule::kConstant}, {"cosine", c2f::LrSchedule::kCosine}}));
  plan->add_option("--train-utts", data_opts.n_train);
  plan->add_option("--eval-utts", data_opts.n_eval);
  plan->add_option("--noise", data_opts.noise_std, "Gaussian noise std of the synthetic corpora");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a manifest");
  std::size_t batch_size = 16;
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--batch-size", batch_size);
  bool show = false;
  eval->add_flag("--show", show, "print reference and hypothesis of every utterance");

  auto* decode = app.add_subcommand("decode", "transcribe one wav file");
  std::string wav;
  decode->add_option("--ckpt", ckpt)->required();
  decode->add_option("--wav", wav)->required();

  auto* inspect = app.add_subcommand("inspect", "print a checkpoint header");
  inspect->add_option("--ckpt", ckpt)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    c2f::RunOptions run;
    run.log = log_line;
    if (synth->parsed()) {
      c2f::SynthConfig cfg;
      cfg.noise_std = noise_std;
      if (language != "target") cfg.accented_symbols.clear();
      if (language == "parent") cfg.base_symbols = "bfghklmp";
      std::cout << c2f::synth_corpus(cfg, n_utts, seed, out, name).string() << "\n";
    } else if (simplify->parsed()) {
      c2f::simplify_manifest(manifest, out);
    } else if (train->parsed()) {
      run.out_dir = out;
      if (!config.empty()) {
        const c2f::PlanReport report = c2f::run_plan(c2f::parse_plan(config), run);
        write_text(run.out_dir / "report.json", report.to_json());
        std::cout << report.to_table();
      } else {
        spec.seed = seed;
        spec.train_manifest = manifest;
        spec.eval_manifest = eval_manifest;
        spec.augment = !no_augment;
        if (!ckpt.empty()) {
          spec.init.kind = c2f::InitSpec::Kind::kCheckpoint;
          spec.init.checkpoint = ckpt;
          spec.init.policy = c2f::transfer_policy_from_name(policy);
        }
        c2f::StageResult r = c2f::run_stage(spec, c2f::init_stage_model(spec, {}), run);
        if (r.final) std::printf("wer=%.4f cer=%.4f\n", r.final->wer, r.final->cer);
        std::cout << r.checkpoint.string() << "\n";
      }
    } else if (plan->parsed()) {
      const c2f::PlanPreset preset = c2f::plan_preset_from_name(preset_name);
      run.out_dir = out.empty() ? fs::path("runs") / (preset_name + "-" + std::to_string(seed)) : fs::path(out);
      const fs::path data = data_dir.empty() ? run.out_dir / "data" : fs::path(data_dir);
      const c2f::StagePlan stages = c2f::preset_plan(preset, c2f::prepare_synthetic_data(data, seed, data_opts), seed, budget);
      fs::create_directories(run.out_dir);
      write_text(run.out_dir / "plan.ini", c2f::plan_to_text(stages));
      const c2f::PlanReport report = c2f::run_plan(stages, run);
      write_text(run.out_dir / "report.json", report.to_json());
      write_text(run.out_dir / "report.txt", report.to_table());
      std::cout << report.to_table();
    } else if (eval->parsed()) {
      c2f::Checkpoint ck = c2f::load_checkpoint(ckpt);
      const c2f::Dataset data = c2f::Dataset::load(manifest, ck.alphabet, run.frontend);
      const c2f::EvalResult r = c2f::evaluate(ck.model, data, batch_size);
      if (show)
        for (std::size_t i = 0; i < data.size(); ++i)
          std::cout << "ref: " << data.utterance(i).text << "\nhyp: " << r.hypotheses[i] << "\n";
      std::printf("wer=%.4f cer=%.4f\n", r.wer, r.cer);
    } else if (decode->parsed()) {
      c2f::Checkpoint ck = c2f::load_checkpoint(ckpt);
      const c2f::Waveform w = c2f::load_wav(wav, run.frontend.sample_rate);
      std::cout << c2f::transcribe(ck.model, c2f::extract_features(w, run.frontend)) << "\n";
    } else if (inspect->parsed()) {
      std::cout << c2f::checkpoint_header_json(c2f::load_checkpoint(ckpt)) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "c2f: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
