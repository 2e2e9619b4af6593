#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "skillpatch/bench.hpp"
#include "skillpatch/common.hpp"

using namespace skillpatch;
using namespace skillpatch::bench;

namespace {

ExperimentSpec quick_spec(Method m)
{
    ExperimentSpec s;
    s.method = m;
    s.shapes = {world::Shape::Rect};
    s.trials_per_shape = 2;
    s.demos = 1;
    auto& c = s.config;
    c.gp_fit.restarts = 1;
    c.gp_fit.max_iterations = 30;
    c.refit_gp_every_demo = false;
    c.skill.vae.epochs = 1;
    c.skill.vae.augmentation = 3;
    c.skill.grid.n_trees = {10};
    c.skill.grid.max_features = {skill::MaxFeatures::All};
    c.skill.grid.min_samples_split = {2};
    c.skill.grid.min_samples_leaf = {1};
    c.skill.grid.max_depth = {-1};
    return s;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

TrialRecord row(Method m, const char* shape, int cell, world::Outcome o, std::uint64_t seed)
{
    TrialRecord r;
    r.method = m;
    r.shape = shape;
    r.start_cell = cell;
    r.outcome = o;
    r.seed = seed;
    return r;
}

}  // namespace

TEST_CASE("trial matrix: 3 shapes x 7 start cells, goal cells excluded, indices stable")
{
    ExperimentSpec s;
    const auto cells = trial_matrix(s);
    REQUIRE(cells.size() == 21);
    std::set<int> idx;
    for (const TrialCell& c : cells) {
        CHECK(c.start_cell != orch::goal_cell_for(c.shape));
        idx.insert(c.index);
    }
    CHECK(idx.size() == 21);

    ExperimentSpec small = s;
    small.trials_per_shape = 3;
    const auto few = trial_matrix(small);
    REQUIRE(few.size() == 9);
    for (const TrialCell& c : few) {
        const auto it = std::find_if(cells.begin(), cells.end(), [&](const TrialCell& d) { return d.index == c.index; });
        REQUIRE(it != cells.end());
        CHECK(task_seed(1, c.index) == task_seed(1, it->index));
    }
    CHECK(task_seed(1, 3) != task_seed(2, 3));
    CHECK(task_seed(1, 3) != episode_seed(1, 3));
}

TEST_CASE("experiment config: method names, validation and JSON round trip")
{
    CHECK(parse_method("dmp") == Method::Dmp);
    CHECK(std::string(to_string(Method::Patched)) == "patched");
    CHECK_THROWS_AS(parse_method("rl"), Error);
    ExperimentSpec s;
    s.method = Method::Planner;
    s.shapes = {world::Shape::Square};
    s.obstacle = true;
    s.demo_counts = {2, 3};
    s.seed = 9;
    const ExperimentSpec t = experiment_spec_from_json(Json::parse(to_json(s).dump()));
    CHECK(to_json(t) == to_json(s));
    CHECK(experiment_spec_from_json(Json::object()).trials_per_shape == 7);
    CHECK_THROWS_AS(experiment_spec_from_json(Json{{"trials_per_shape", 8}}), Error);
    CHECK_THROWS_AS(experiment_spec_from_json(Json{{"demo_counts", {0}}}), Error);
    CHECK_THROWS_AS(experiment_spec_from_json(Json{{"version", kConfigVersion + 1}}), Error);
}

TEST_CASE("the shipped default config is the built-in defaults")
{
    const Json shipped = Json::parse(read_file(std::string(SKILLPATCH_SOURCE_DIR) + "/config/default.json"));
    CHECK(shipped.at("version") == kConfigVersion);
    CHECK(shipped == to_json(ExperimentSpec{}));
    CHECK(to_json(experiment_spec_from_json(shipped)) == shipped);
}

TEST_CASE("run_experiment: no shapes gives an empty table and a header-only CSV")
{
    ExperimentSpec s = quick_spec(Method::Patched);
    s.shapes.clear();
    const ResultTable t = run_experiment(s);
    CHECK(t.rows.empty());
    CHECK(t.counts().total() == 0);
    CHECK(results_csv(t) == "method,shape,start_cell,obstacle,outcome,reason,seed\n");
}

TEST_CASE("emit_report: a known two-row table has a fixed byte layout")
{
    ResultTable t;
    t.rows.push_back(row(Method::Planner, "rect", 0, world::Outcome::success(), 17));
    t.rows.push_back(
        row(Method::Patched, "circle", 3, world::Outcome::failure(world::Outcome::Reason::NotInHole), 18446744073709551615ull));
    t.rows.back().obstacle = true;
    const std::string expected =
        "method,shape,start_cell,obstacle,outcome,reason,seed\n"
        "planner,rect,0,false,Success,,17\n"
        "patched,circle,3,true,Failure,NotInHole,18446744073709551615\n";
    CHECK(results_csv(t) == expected);
    CHECK(results_csv(t) == results_csv(t));

    const auto dir = std::filesystem::temp_directory_path() / "skillpatch_bench_report";
    std::filesystem::remove_all(dir);
    emit_report(t, dir.string());
    CHECK(read_file((dir / "results.csv").string()) == expected);
    CHECK(std::filesystem::exists(dir / "summary.txt"));
    CHECK(std::filesystem::exists(dir / "episodes" / "planner.jsonl"));
    CHECK(std::filesystem::exists(dir / "episodes" / "patched.jsonl"));
    CHECK_FALSE(std::filesystem::exists(dir / "episodes" / "dmp.jsonl"));
    CHECK_FALSE(std::filesystem::exists(dir / "sweep.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("emit_report: an unwritable directory is an IoFailure")
{
    const auto file = std::filesystem::temp_directory_path() / "skillpatch_bench_blocker";
    write_file(file.string(), "x");
    try {
        emit_report(ResultTable{}, (file / "out").string());
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoFailure);
    }
    std::filesystem::remove(file);
}

TEST_CASE("summary: counts recomputed from the CSV agree, and every trial appears once")
{
    ExperimentSpec s = quick_spec(Method::Planner);
    s.shapes = {world::Shape::Rect, world::Shape::Circle, world::Shape::Square};
    s.trials_per_shape = 3;
    const ResultTable t = run_experiment(s);
    REQUIRE(t.rows.size() == 9);
    const auto csv = parse_csv(results_csv(t));
    REQUIRE(csv.size() == 10);
    std::map<std::string, int> kinds;
    std::set<std::pair<std::string, std::string>> cells;
    for (std::size_t i = 1; i < csv.size(); ++i) {
        REQUIRE(csv[i].size() == 7);
        ++kinds[csv[i][4]];
        cells.insert({csv[i][1], csv[i][2]});
    }
    CHECK(cells.size() == 9);
    const Counts c = t.counts(Method::Planner);
    CHECK(c.success == kinds["Success"]);
    CHECK(c.partial == kinds["PartialSuccess"]);
    CHECK(c.failure == kinds["Failure"]);
    CHECK(c.total() == 9);
    char frac[16];
    std::snprintf(frac, sizeof frac, "%.4f", kinds["Success"] / 9.0);
    CHECK(summary_text(t).find(frac) != std::string::npos);
    CHECK(t.counts(Method::Dmp).total() == 0);
}

TEST_CASE("run_experiment: fixed master seed gives identical CSV bytes")
{
    for (Method m : {Method::Planner, Method::Patched, Method::Dmp}) {
        const ExperimentSpec s = quick_spec(m);
        const std::string a = results_csv(run_experiment(s));
        CHECK(a == results_csv(run_experiment(s)));
        CHECK(parse_csv(a).size() == 3);
    }
}

TEST_CASE("run_experiment: patched trains its own artifacts or uses the supplied ones")
{
    const ExperimentSpec s = quick_spec(Method::Patched);
    const ResultTable own = run_experiment(s);
    CHECK(own.skill_trained);
    for (const TrialRecord& r : own.rows) CHECK(r.demos == 1);
    const orch::SessionArtifacts empty;
    const ResultTable none = run_experiment(s, &empty);
    CHECK_FALSE(none.skill_trained);
    ExperimentSpec p = s;
    p.method = Method::Planner;
    const ResultTable planner = run_experiment(p);
    // without a skill the patched method is the planner
    for (std::size_t i = 0; i < none.rows.size(); ++i) {
        CHECK(none.rows[i].outcome == planner.rows[i].outcome);
        CHECK(none.rows[i].log.at("actions") == planner.rows[i].log.at("actions"));
    }
}

TEST_CASE("demo_sweep: one row per count, repeated counts give identical rows")
{
    ExperimentSpec s = quick_spec(Method::Patched);
    s.demo_counts = {1};
    const ResultTable one = demo_sweep(s);
    REQUIRE(one.sweep.size() == 1);
    CHECK(one.sweep[0].trials == 2);
    CHECK(one.rows.size() == 2);

    s.demo_counts = {1, 1};
    const ResultTable twice = demo_sweep(s);
    REQUIRE(twice.sweep.size() == 2);
    CHECK(twice.sweep[0] == twice.sweep[1]);
    CHECK(twice.sweep[0] == one.sweep[0]);
    CHECK(sweep_csv(twice).rfind("demos,success,trials,fraction\n", 0) == 0);

    s.demo_counts.clear();
    CHECK_THROWS_AS(demo_sweep(s), Error);
}

TEST_CASE("run_door: seeded planner trials open the door without anomalies")
{
    ExperimentSpec s;
    s.door_trials = 4;
    const ResultTable t = run_door(s);
    REQUIRE(t.rows.size() == 4);
    for (const TrialRecord& r : t.rows) {
        CHECK(r.outcome == world::Outcome::success());
        CHECK(r.anomalies == 0);
        CHECK(r.shape == "door");
    }
    CHECK_FALSE(t.skill_trained);
    CHECK(summary_text(t).find("skill_trained no") != std::string::npos);
}
