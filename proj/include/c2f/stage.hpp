// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "c2f/augment.hpp"
#include "c2f/checkpoint.hpp"
#include "c2f/data.hpp"
#include "c2f/frontend.hpp"
#include "c2f/metrics.hpp"
#include "c2f/optim.hpp"

namespace c2f {

struct InitSpec {
  enum class Kind { kScratch, kCheckpoint, kStage };
  Kind kind = Kind::kScratch;
  std::filesystem::path checkpoint;  // kCheckpoint
  std::string from_stage;            // kStage: output of an earlier stage
  TransferPolicy policy = TransferPolicy::kEncoderOnly;
};

struct StageSpec {
  std::string name = "stage";
  InitSpec init;
  std::string alphabet = "czech";
  std::string preset = "micro";
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::uint64_t freeze_steps = 0;  // encoder frozen for the first k steps
  double base_lr = 0.01;
  OptimConfig optim;
  std::size_t batch_size = 16;
  bool augment = true;
  CutoutConfig cutout;
  std::filesystem::path train_manifest;
  std::filesystem::path eval_manifest;
  std::uint64_t eval_every = 0;  // 0 disables periodic evaluation

  void validate() const;
};

// One CSV row: step,loss,lr,wer,cer,wall_s. Absent values are empty fields.
struct MetricsRow {
  std::uint64_t step = 0;
  std::optional<double> loss;
  std::optional<double> lr;
  std::optional<double> wer;
  std::optional<double> cer;
  std::optional<double> wall_s;
};

inline constexpr const char* kMetricsHeader = "step,loss,lr,wer,cer,wall_s";
std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct StepEvent {
  const StageSpec& spec;
  std::uint64_t stage_step;  // 0 before the first update
  bool encoder_frozen;       // during the update that produced this state
  const Model& model;
};

struct RunOptions {
  std::filesystem::path out_dir = ".";
  FrontendConfig frontend;
  bool record_wall_time = false;
  std::function<void(const StepEvent&)> on_step;
  std::function<void(const std::string&)> log;
};

struct StageResult {
  Model model;
  std::vector<MetricsRow> rows;
  std::optional<EvalResult> initial;       // before any update
  std::optional<EvalResult> after_freeze;  // end of the frozen phase
  std::optional<EvalResult> final;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
};

// Builds the initial model of a stage (scratch, checkpoint, or an earlier
// stage's output checkpoint from `produced`).
Model init_stage_model(const StageSpec& spec, const std::map<std::string, std::filesystem::path>& produced);

// forward -> CTC -> backward -> NovoGrad for spec.steps updates. Writes
// <out>/<name>.csv and <out>/<name>.ckpt. A non-finite loss aborts with
// c2f::Error pointing at <out>/<name>.last_good.ckpt.
StageResult run_stage(const StageSpec& spec, Model model, const RunOptions& opts);

struct StagePlan {
  std::string name;
  std::vector<StageSpec> stages;
};

enum class PlanPreset { kBaselineCs, kEnCs, kEnSimCsCs, kSimCsCs };
PlanPreset plan_preset_from_name(std::string_view name);
std::string to_string(PlanPreset preset);

// Manifests consumed by the presets.
struct PlanData {
  std::filesystem::path parent_train, parent_eval;  // parent language (English)
  std::filesystem::path cs_train, cs_eval;          // full target alphabet
  std::filesystem::path simcs_train, simcs_eval;    // diacritics stripped
};

// Desk-scale budgets: the 39k/1.5k step schedule scaled by 1/26.
struct PlanBudget {
  std::uint64_t parent_steps = 1500;
  std::uint64_t simplified_steps = 1500;
  std::uint64_t adapt_steps = 150;
  std::uint64_t full_steps = 1500;
  std::uint64_t warmup_steps = 40;
  std::uint64_t eval_every = 50;
  double train_lr = OptimConfig{}.lr_train;
  double finetune_lr = OptimConfig{}.lr_train;  // see README: step budget scaling
  LrSchedule schedule = LrSchedule::kConstant;
  std::size_t batch_size = 16;
  bool augment = true;
  CutoutConfig cutout{2, 8, 8};
};

StagePlan preset_plan(PlanPreset preset, const PlanData& data, std::uint64_t seed, const PlanBudget& budget = {});

// Generates the parent-language, target and simplified-target corpora.
struct SynthDataOptions {
  std::size_t n_train = 200;
  std::size_t n_eval = 50;
  double noise_std = SynthConfig{}.noise_std;
};
PlanData prepare_synthetic_data(const std::filesystem::path& dir, std::uint64_t seed, const SynthDataOptions& opts = {});

// Plain-text plan: one [stage <name>] section per stage with key = value
// lines. Relative manifest/checkpoint paths resolve against the file.
StagePlan parse_plan(const std::filesystem::path& path);
std::string plan_to_text(const StagePlan& plan);

struct StageReport {
  std::string name;
  std::string alphabet;
  std::optional<EvalResult> initial;
  std::optional<EvalResult> after_freeze;
  std::optional<EvalResult> final;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
};

struct PlanReport {
  std::string plan;
  std::vector<StageReport> stages;

  std::string to_json() const;
  std::string to_table() const;
};

PlanReport run_plan(const StagePlan& plan, const RunOptions& opts);

}  // namespace c2f
