#pragma once

#include <cstdint>
#include <string_view>

namespace fleetsim {

/// Severity assigned to a map point by the directional counter. The numeric
/// values are the on-disk encoding.
enum class RadiationLevel : std::uint8_t { none = 0, yellow = 1, orange = 2, red = 3 };

std::string_view to_string(RadiationLevel level);

struct RadiationAnnotation {
  RadiationLevel level = RadiationLevel::none;
  double observation_distance = 0.0;  // camera-to-point, m
  double observed_at = 0.0;           // sim seconds
};

enum class AnnotationRule {
  closer_wins,  // smallest observation distance; earlier observation on ties
  max_level,    // highest severity; then closer-wins
};

/// True when `incoming` should replace `existing` under `rule`.
bool annotation_supersedes(const RadiationAnnotation& existing, const RadiationAnnotation& incoming,
                           AnnotationRule rule);

}  // namespace fleetsim
