#include "skillpatch/io.hpp"

#include <fstream>
#include <sstream>

#include "skillpatch/common.hpp"

namespace skillpatch {

const char* to_string(ErrorCode code)
{
    switch (code) {
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::Unplaceable: return "Unplaceable";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::NotApplicable: return "NotApplicable";
        case ErrorCode::DemoFailed: return "DemoFailed";
        case ErrorCode::PlanNotFound: return "PlanNotFound";
        case ErrorCode::NoFeasibleGoal: return "NoFeasibleGoal";
        case ErrorCode::SamplingExhausted: return "SamplingExhausted";
        case ErrorCode::CorruptLog: return "CorruptLog";
        case ErrorCode::MalformedMessage: return "MalformedMessage";
        case ErrorCode::ClientDisconnected: return "ClientDisconnected";
        case ErrorCode::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

void to_json(Json& j, const Pose4& p) { j = Json::array({p.x, p.y, p.z, p.yaw}); }

void from_json(const Json& j, Pose4& p)
{
    if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::MalformedMessage, "pose must be [x, y, z, yaw]");
    p = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), wrap_angle(j[3].get<double>())};
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
    out << contents;
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path);
}

}  // namespace skillpatch

namespace skillpatch::world {

void to_json(Json& j, const Action& a) { j = Json{{"d", a.d}, {"grip", to_string(a.grip)}}; }

void from_json(const Json& j, Action& a)
{
    if (!j.is_object() || !j.contains("d")) throw Error(ErrorCode::MalformedMessage, "action needs field 'd'");
    a.d = j.at("d").get<Pose4>();
    a.grip = j.contains("grip") ? grip_from_string(j.at("grip").get<std::string>()) : Grip::Hold;
}

void to_json(Json& j, const Raster& r) { j = Json{{"w", r.w}, {"h", r.h}, {"pixels", r.pixels}}; }

void from_json(const Json& j, Raster& r)
{
    r.w = j.at("w").get<int>();
    r.h = j.at("h").get<int>();
    r.pixels = j.at("pixels").get<std::vector<double>>();
    if (static_cast<int>(r.pixels.size()) != r.w * r.h) throw Error(ErrorCode::MalformedMessage, "raster size mismatch");
}

void to_json(Json& j, const TaskConfig& c)
{
    j = Json{{"shape", to_string(c.shape)}, {"start_cell", c.start_cell}, {"goal_cell", c.goal_cell},
             {"obstacle", c.obstacle},     {"eps_percept", c.eps_percept}, {"tol_insert", c.tol_insert},
             {"seed", c.seed}};
}

void from_json(const Json& j, TaskConfig& c)
{
    try {
        if (j.contains("shape")) c.shape = shape_from_string(j.at("shape").get<std::string>());
        if (j.contains("start_cell")) c.start_cell = j.at("start_cell").get<int>();
        if (j.contains("goal_cell")) c.goal_cell = j.at("goal_cell").get<int>();
        if (j.contains("obstacle")) c.obstacle = j.at("obstacle").get<bool>();
        if (j.contains("eps_percept")) c.eps_percept = j.at("eps_percept").get<double>();
        if (j.contains("tol_insert")) c.tol_insert = j.at("tol_insert").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
}

void to_json(Json& j, const Outcome& o) { j = Json{{"outcome", to_string(o.kind)}, {"reason", to_string(o.reason)}}; }

Json trace_record(int t, const WorldState& after, const Action& action, bool anomaly)
{
    return Json{{"t", t},           {"ee", after.ee},       {"piece_pose", after.piece_pose},
                {"contact", after.contact}, {"action", action}, {"anomaly_flag", anomaly}};
}

}  // namespace skillpatch::world
