#pragma once

// Shared JSON builders for core serialization. Internal to src/: public
// headers stay free of the vendored json dependency.

#include <nlohmann/json.hpp>

#include "ctt/metrics.hpp"

namespace ctt::internal {

nlohmann::ordered_json group_to_json(const std::optional<GroupStats>& group);
nlohmann::ordered_json distribution_json(const GapDistribution& dist);
nlohmann::ordered_json metrics_json(const MetricsReport& report);

}  // namespace ctt::internal
