#pragma once

#include "tsa/grid.hpp"

#include <filesystem>
#include <string>

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(TSA_FIXTURE_DIR) / name; }

inline tsa::GridCase smib() { return tsa::load_case(fixture("smib.json")); }
inline tsa::GridCase two_bus() { return tsa::load_case(fixture("two_bus.json")); }
inline tsa::GridCase case39() { return tsa::load_case(tsa::resolve_case_path("39bus")); }
inline tsa::GridCase case9() { return tsa::load_case(tsa::resolve_case_path("9bus")); }
