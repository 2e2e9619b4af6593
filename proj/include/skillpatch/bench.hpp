#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skillpatch/dmp.hpp"
#include "skillpatch/io.hpp"
#include "skillpatch/orchestrator.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch::bench {

enum class Method { Planner, Dmp, Patched };
const char* to_string(Method m);
/// Throws InvalidConfig for an unknown name.
Method parse_method(const std::string& name);

struct ExperimentSpec {
    Method method{Method::Patched};
    std::vector<world::Shape> shapes{world::Shape::Rect, world::Shape::Circle, world::Shape::Square};
    int trials_per_shape{7};
    bool obstacle{false};
    int demos{20};                          // training demonstrations for a single patched run
    std::vector<int> demo_counts{1, 5, 10, 20};
    std::uint64_t seed{1};
    orch::OrchestratorConfig config{};
    dmp::DmpConfig dmp{};
    int door_trials{10};

    /// Throws InvalidConfig for out-of-range counts.
    void validate() const;
};

/// Schema version written to and required of experiment config files.
constexpr int kConfigVersion = 1;

Json to_json(const ExperimentSpec& s);
/// Missing keys keep their defaults. Throws InvalidConfig for another version.
ExperimentSpec experiment_spec_from_json(const Json& j);

struct TrialRecord {
    Method method{Method::Planner};
    std::string shape{};  // piece shape, or "door"
    int start_cell{0};
    bool obstacle{false};
    world::Outcome outcome{};
    std::string error{};
    std::uint64_t seed{0};
    int demos{0};
    int anomalies{0};
    Json log{};
};

struct SweepRow {
    int demos{0};
    int success{0};
    int trials{0};

    double fraction() const { return trials > 0 ? static_cast<double>(success) / trials : 0.0; }
    bool operator==(const SweepRow&) const = default;
};

struct Counts {
    int success{0}, partial{0}, failure{0}, hit_obstacle{0}, not_in_hole{0};
    int total() const { return success + partial + failure; }
};

struct ResultTable {
    std::vector<TrialRecord> rows{};
    std::vector<SweepRow> sweep{};
    bool skill_trained{false};

    Counts counts() const;
    Counts counts(Method m) const;
};

struct TrialCell {
    world::Shape shape;
    int start_cell;
    int index;  // stable across spec sizes: shape * 8 + start cell
};

/// First `trials_per_shape` start cells of every shape, skipping the goal cell.
std::vector<TrialCell> trial_matrix(const ExperimentSpec& spec);

/// Task seed and episode seed of a trial; they depend only on the master seed and the cell index.
std::uint64_t task_seed(std::uint64_t master, int index);
std::uint64_t episode_seed(std::uint64_t master, int index);
/// Training seed for a demonstration count.
std::uint64_t training_seed(std::uint64_t master, int demos);

/// Runs the chosen method over the trial matrix. A patched run trains on
/// `spec.demos` demonstrations unless `artifacts` are supplied.
ResultTable run_experiment(const ExperimentSpec& spec, const orch::SessionArtifacts* artifacts = nullptr);

/// Patched method for every entry of `demo_counts`, each trained afresh.
ResultTable demo_sweep(const ExperimentSpec& spec);

/// Seeded door-analog trials through the training loop.
ResultTable run_door(const ExperimentSpec& spec);

std::string results_csv(const ResultTable& table);
std::string summary_text(const ResultTable& table);
std::string sweep_csv(const ResultTable& table);
/// One episode log per line, in trial order.
std::string episodes_jsonl(const ResultTable& table);

/// Writes results.csv, summary.txt, sweep.csv (when present) and episodes/<method>.jsonl
/// under `dir`. Throws IoFailure.
void emit_report(const ResultTable& table, const std::string& dir);

}  // namespace skillpatch::bench
