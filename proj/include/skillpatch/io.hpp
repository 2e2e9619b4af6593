#pragma once

// JSON bindings for the value types that cross process boundaries
// (configs, traces, plans, datasets, wire messages).

#include <string>

#include "json.hpp"

#include "skillpatch/pose.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch {

using Json = nlohmann::json;

void to_json(Json& j, const Pose4& p);
void from_json(const Json& j, Pose4& p);

/// Reads a whole file; throws Error(IoFailure) when unreadable.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace skillpatch

namespace skillpatch::world {

void to_json(Json& j, const Action& a);
void from_json(const Json& j, Action& a);
void to_json(Json& j, const Raster& r);
void from_json(const Json& j, Raster& r);
void to_json(Json& j, const TaskConfig& c);
/// Missing keys keep their defaults; a bad shape or cell throws InvalidConfig.
void from_json(const Json& j, TaskConfig& c);
void to_json(Json& j, const Outcome& o);

/// One JSON-lines trace record: {t, ee, piece_pose, contact, action, anomaly_flag}.
Json trace_record(int t, const WorldState& after, const Action& action, bool anomaly);

}  // namespace skillpatch::world
