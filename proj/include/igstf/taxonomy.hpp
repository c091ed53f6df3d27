#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace igstf {

// Six incident categories, five descriptions each. Index order is the
// embedding-table row order and must never change once models are saved.
inline constexpr std::array<std::string_view, 6> kIncidentTypes = {
    "Hazard", "Accident", "Breakdown", "Weather", "Other", "Police"};

inline constexpr std::size_t kDescriptionsPerType = 5;

inline constexpr std::array<std::string_view, 30> kIncidentDescriptions = {
    // Hazard
    "Traffic Hazard", "Debris", "Animal Hazard", "Object in Roadway", "Pedestrian on Roadway",
    // Accident
    "1141 En Route", "Traffic Collision", "Hit and Run", "Injury Collision", "Multi-Vehicle Collision",
    // Breakdown
    "Disabled Vehicle", "Flat Tire", "Stalled Vehicle", "Out of Gas", "Mechanical Failure",
    // Weather
    "Fog", "Wind", "Rain", "Snow", "Flooding",
    // Other
    "Fire", "Sigalert", "Roadwork", "Lane Closure", "Special Event",
    // Police
    "Police Activity", "Advisory", "Pursuit", "DUI Checkpoint", "Traffic Break"};

inline std::optional<std::size_t> incident_type_index(std::string_view name) {
  for (std::size_t i = 0; i < kIncidentTypes.size(); ++i)
    if (kIncidentTypes[i] == name) return i;
  return std::nullopt;
}

inline std::optional<std::size_t> incident_description_index(std::string_view name) {
  for (std::size_t i = 0; i < kIncidentDescriptions.size(); ++i)
    if (kIncidentDescriptions[i] == name) return i;
  return std::nullopt;
}

// Category a description is listed under.
inline std::size_t description_type(std::size_t description_index) {
  return description_index / kDescriptionsPerType;
}

}  // namespace igstf
