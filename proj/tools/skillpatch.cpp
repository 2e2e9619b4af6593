// skillpatch: experiment harness and teleoperation server.
//
//   skillpatch run    [--method patched|planner|dmp] [--obstacle] [--demos N]
//   skillpatch sweep  [--counts 1,5,10,20]
//   skillpatch door
//   skillpatch serve  --serve-port P        (training demos come from a socket operator)
//   skillpatch replay --log out/episodes/patched.jsonl --index 0 --serve-port P
//
// Common flags: --config <json>, --seed, --out <dir>, --print-config.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "skillpatch/bench.hpp"
#include "skillpatch/common.hpp"
#include "skillpatch/io.hpp"
#include "skillpatch/teleop_service.hpp"

using namespace skillpatch;

namespace {

struct Flags {
    std::string config;
    std::string method;
    bool obstacle{false};
    std::optional<int> demos;
    std::optional<std::uint64_t> seed;
    std::string out{"out"};
    int serve_port{0};
    bool print_config{false};
    std::vector<int> counts;
    std::string log;
    std::size_t index{0};
    int cadence_ms{100};
    int reconnect_s{30};
};

bench::ExperimentSpec load_spec(const Flags& f)
{
    bench::ExperimentSpec spec =
        f.config.empty() ? bench::ExperimentSpec{} : bench::experiment_spec_from_json(Json::parse(read_file(f.config)));
    if (!f.method.empty()) spec.method = bench::parse_method(f.method);
    if (f.obstacle) spec.obstacle = true;
    if (f.demos) spec.demos = *f.demos;
    if (f.seed) spec.seed = *f.seed;
    if (!f.counts.empty()) spec.demo_counts = f.counts;
    spec.validate();
    return spec;
}

void report(const bench::ResultTable& table, const std::string& out)
{
    bench::emit_report(table, out);
    std::cout << bench::summary_text(table) << "wrote " << out << "\n";
}

std::uint16_t port_of(int p)
{
    if (p < 0 || p > 65535) throw Error(ErrorCode::InvalidConfig, "--serve-port must be in [0, 65535]");
    return static_cast<std::uint16_t>(p);
}

int serve(const bench::ExperimentSpec& spec, const Flags& f)
{
    teleop::Server server(port_of(f.serve_port));
    std::cout << "listening on 127.0.0.1:" << server.port() << std::endl;
    teleop::ServiceOptions options;
    options.demo = spec.config.demo;
    options.reconnect_timeout = std::chrono::seconds(f.reconnect_s);
    teleop::TeleopService service(server, options);

    orch::OrchestratorConfig cfg = spec.config;
    cfg.obstacle = spec.obstacle;
    const orch::SessionArtifacts artifacts = orch::run_training(spec.demos, cfg, bench::training_seed(spec.seed, spec.demos),
                                                                service.demo_provider(), service.step_observer());
    std::filesystem::create_directories(f.out);
    write_file((std::filesystem::path(f.out) / "demos.jsonl").string(), skill::demos_to_jsonl(artifacts.demos));
    std::cout << "received " << service.demos_received() << " demonstrations\n";

    bench::ExperimentSpec test = spec;
    test.method = bench::Method::Patched;
    report(bench::run_experiment(test, &artifacts), f.out);
    return 0;
}

int replay(const Flags& f)
{
    if (f.log.empty()) throw Error(ErrorCode::InvalidConfig, "replay needs --log");
    const std::vector<Json> records = teleop::replay_records(teleop::read_episode_log(f.log, f.index));
    teleop::Server server(port_of(f.serve_port));
    std::cout << "listening on 127.0.0.1:" << server.port() << std::endl;
    if (!server.accept_client(std::chrono::seconds(f.reconnect_s))) {
        throw Error(ErrorCode::ClientDisconnected, "no client connected for the replay");
    }
    teleop::TeleopService service(server);
    const std::size_t sent = service.stream_replay(records, std::chrono::milliseconds(f.cadence_ms));
    std::cout << "sent " << sent << " of " << records.size() << " frames\n";
    return sent == records.size() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Planner with learned recovery skills: experiments and teleoperation"};
    app.require_subcommand(0, 1);
    app.fallthrough();
    Flags f;
    app.add_option("--config", f.config, "experiment config JSON (see config/default.json)");
    app.add_option("--method", f.method, "planner | dmp | patched");
    app.add_flag("--obstacle", f.obstacle, "place the obstacle between start and goal");
    app.add_option("--demos", f.demos, "training demonstrations for a patched run");
    app.add_option("--seed", f.seed, "master seed");
    app.add_option("--out", f.out, "output directory")->capture_default_str();
    app.add_option("--serve-port", f.serve_port, "teleoperation port (0 picks a free one)")->capture_default_str();
    app.add_flag("--print-config", f.print_config, "print the effective config and exit");

    CLI::App* run = app.add_subcommand("run", "trial matrix for one method");
    CLI::App* sweep = app.add_subcommand("sweep", "patched method across demonstration counts");
    sweep->add_option("--counts", f.counts, "demonstration counts")->delimiter(',');
    CLI::App* door = app.add_subcommand("door", "door-opening trials");
    CLI::App* srv = app.add_subcommand("serve", "train with demonstrations from a socket operator, then evaluate");
    srv->add_option("--reconnect-timeout", f.reconnect_s, "seconds to wait for an operator")->capture_default_str();
    CLI::App* rep = app.add_subcommand("replay", "stream a logged episode to a socket client");
    rep->add_option("--log", f.log, "episodes/*.jsonl file")->required();
    rep->add_option("--index", f.index, "episode line in the file")->capture_default_str();
    rep->add_option("--cadence-ms", f.cadence_ms, "milliseconds between frames")->capture_default_str();
    rep->add_option("--reconnect-timeout", f.reconnect_s, "seconds to wait for a client")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*rep) return replay(f);
        const bench::ExperimentSpec spec = load_spec(f);
        if (f.print_config) {
            std::cout << bench::to_json(spec).dump(2) << "\n";
            return 0;
        }
        if (*run) {
            report(bench::run_experiment(spec), f.out);
        } else if (*sweep) {
            report(bench::demo_sweep(spec), f.out);
        } else if (*door) {
            report(bench::run_door(spec), f.out);
        } else if (*srv) {
            return serve(spec, f);
        } else {
            std::cout << app.help();
            return 2;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
