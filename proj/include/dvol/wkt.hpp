#pragma once

#include <cctype>
#include <optional>
#include <string_view>
#include <vector>

#include "dvol/types.hpp"
#include "dvol/util.hpp"

namespace dvol {

// Minimal WKT POLYGON reader: outer ring only, "POLYGON((lon lat, ...))".
// Returns nullopt on anything it does not understand (including inner rings).
inline std::optional<std::vector<LatLon>> parse_wkt_polygon(std::string_view wkt) {
  auto skip_ws = [&](std::size_t& i) {
    while (i < wkt.size() && std::isspace(static_cast<unsigned char>(wkt[i]))) ++i;
  };
  std::size_t i = 0;
  skip_ws(i);
  static constexpr std::string_view kTag = "POLYGON";
  if (wkt.substr(i, kTag.size()) != kTag) return std::nullopt;
  i += kTag.size();
  skip_ws(i);
  if (i >= wkt.size() || wkt[i] != '(') return std::nullopt;
  ++i;
  skip_ws(i);
  if (i >= wkt.size() || wkt[i] != '(') return std::nullopt;
  ++i;

  std::vector<LatLon> ring;
  while (true) {
    skip_ws(i);
    std::size_t j = i;
    while (j < wkt.size() && !std::isspace(static_cast<unsigned char>(wkt[j]))) ++j;
    double lon = 0.0, lat = 0.0;
    if (!parse_double(wkt.substr(i, j - i), lon)) return std::nullopt;
    i = j;
    skip_ws(i);
    j = i;
    while (j < wkt.size() && wkt[j] != ',' && wkt[j] != ')' &&
           !std::isspace(static_cast<unsigned char>(wkt[j])))
      ++j;
    if (!parse_double(wkt.substr(i, j - i), lat)) return std::nullopt;
    i = j;
    skip_ws(i);
    ring.push_back({lat, lon});
    if (i >= wkt.size()) return std::nullopt;
    if (wkt[i] == ',') {
      ++i;
      continue;
    }
    if (wkt[i] == ')') {
      ++i;
      break;
    }
    return std::nullopt;
  }
  skip_ws(i);
  if (i >= wkt.size() || wkt[i] != ')') return std::nullopt;  // inner rings unsupported
  ++i;
  skip_ws(i);
  if (i != wkt.size()) return std::nullopt;

  // drop an explicit closing vertex; rings are stored open
  if (ring.size() >= 2 && ring.front().lat == ring.back().lat &&
      ring.front().lon == ring.back().lon)
    ring.pop_back();
  if (ring.size() < 3) return std::nullopt;
  return ring;
}

inline std::string to_wkt_polygon(const std::vector<LatLon>& ring) {
  std::string out = "POLYGON((";
  for (std::size_t i = 0; i <= ring.size(); ++i) {
    const auto& v = ring[i % ring.size()];  // repeat first vertex to close
    if (i) out += ", ";
    out += format_double(v.lon);
    out += ' ';
    out += format_double(v.lat);
  }
  out += "))";
  return out;
}

}  // namespace dvol
