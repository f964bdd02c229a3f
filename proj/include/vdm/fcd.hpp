#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vdm/core.hpp"
#include "vdm/errors.hpp"
#include "vdm/mobility.hpp"

namespace vdm {

namespace fcd_detail {

struct Attr {
  std::string name;
  std::string value;
};

struct Tag {
  std::string name;
  std::vector<Attr> attrs;
  bool closing = false;      // </name>
  bool self_closing = false; // <name ... />
  std::size_t line = 0;
};

/// Tokenizer for the FCD XML subset: declarations, comments, and plain
/// elements with double/single-quoted attributes. No entities, CDATA or
/// namespaces — SUMO's fcd-export does not emit them.
class XmlScanner {
 public:
  explicit XmlScanner(std::string text) : text_(std::move(text)) {}

  bool next(Tag& out) {
    while (true) {
      skip_until('<');
      if (pos_ >= text_.size()) return false;
      const std::size_t tag_line = line_;
      ++pos_;  // consume '<'
      if (starts_with("?")) {  // declaration
        skip_past("?>", "unterminated XML declaration", tag_line);
        continue;
      }
      if (starts_with("!--")) {
        skip_past("-->", "unterminated comment", tag_line);
        continue;
      }
      if (starts_with("!")) {  // DOCTYPE etc.
        skip_until('>');
        expect('>', "unterminated markup declaration", tag_line);
        continue;
      }
      out = Tag{};
      out.line = tag_line;
      if (starts_with("/")) {
        ++pos_;
        out.closing = true;
      }
      out.name = read_name(tag_line);
      while (true) {
        skip_space();
        if (pos_ >= text_.size()) throw ParseError("unterminated tag", tag_line);
        if (text_[pos_] == '>') {
          ++pos_;
          return true;
        }
        if (text_[pos_] == '/') {
          ++pos_;
          expect('>', "expected '>' after '/'", tag_line);
          out.self_closing = true;
          return true;
        }
        if (out.closing) throw ParseError("attributes in closing tag", tag_line);
        Attr a;
        a.name = read_name(tag_line);
        skip_space();
        expect('=', "expected '=' after attribute name", tag_line);
        skip_space();
        if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\''))
          throw ParseError("expected quoted attribute value", line_);
        const char quote = text_[pos_++];
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != quote) {
          if (text_[pos_] == '\n') ++line_;
          ++pos_;
        }
        if (pos_ >= text_.size()) throw ParseError("unterminated attribute value", tag_line);
        a.value = text_.substr(start, pos_ - start);
        ++pos_;
        out.attrs.push_back(std::move(a));
      }
    }
  }

 private:
  bool starts_with(const char* s) const {
    return text_.compare(pos_, std::char_traits<char>::length(s), s) == 0;
  }
  void skip_until(char c) {
    while (pos_ < text_.size() && text_[pos_] != c) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }
  void skip_past(const char* end, const char* err, std::size_t tag_line) {
    const std::size_t found = text_.find(end, pos_);
    if (found == std::string::npos) throw ParseError(err, tag_line);
    for (std::size_t i = pos_; i < found; ++i)
      if (text_[i] == '\n') ++line_;
    pos_ = found + std::char_traits<char>::length(end);
  }
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }
  void expect(char c, const char* err, std::size_t tag_line) {
    if (pos_ >= text_.size() || text_[pos_] != c) throw ParseError(err, tag_line);
    ++pos_;
  }
  std::string read_name(std::size_t tag_line) {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':' ||
          c == '.')
        ++pos_;
      else
        break;
    }
    if (pos_ == start) throw ParseError("expected a name", tag_line);
    return text_.substr(start, pos_ - start);
  }

  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

inline const std::string& require_attr(const Tag& tag, const char* name) {
  for (const auto& a : tag.attrs)
    if (a.name == name) return a.value;
  throw ParseError("element <" + tag.name + "> is missing attribute '" + name + "'", tag.line);
}

inline double require_double(const Tag& tag, const char* name) {
  const std::string& v = require_attr(tag, name);
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ParseError("attribute '" + std::string(name) + "' is not a number: '" + v + "'",
                     tag.line);
  }
}

struct RawSample {
  double time;
  double x, y;
  double h;  // rad, already converted
  double u;  // m/s
};

/// Wrap-aware linear interpolation of headings.
inline double lerp_heading(double h0, double h1, double f) {
  return wrap_angle(h0 + f * wrap_angle(h1 - h0));
}

}  // namespace fcd_detail

/// SUMO angle convention (degrees, 0 = north, clockwise) to heading in
/// radians counterclockwise from +x.
inline double sumo_angle_to_heading(double angle_deg) {
  return wrap_angle(std::numbers::pi / 2.0 - angle_deg * std::numbers::pi / 180.0);
}

/// Loads a SUMO fcd-export XML file and resamples it onto the t_t slot
/// grid. Vehicle ids are preserved when every id in the file is a
/// nonnegative integer; otherwise ids are assigned by sorted name.
/// The file's timestep must divide into (or be a multiple of) t_t;
/// anything else is a resampling error.
inline TraceSet load_fcd_trace(std::istream& in, double t_t) {
  std::ostringstream buf;
  buf << in.rdbuf();
  fcd_detail::XmlScanner scanner(buf.str());

  std::map<std::string, std::vector<fcd_detail::RawSample>> series;
  std::vector<double> times;
  bool in_timestep = false;
  double current_time = 0.0;

  fcd_detail::Tag tag;
  while (scanner.next(tag)) {
    if (tag.name == "timestep") {
      if (tag.closing) {
        in_timestep = false;
        continue;
      }
      current_time = fcd_detail::require_double(tag, "time");
      if (!times.empty() && current_time <= times.back())
        throw ParseError("timestep times must be strictly increasing", tag.line);
      times.push_back(current_time);
      in_timestep = !tag.self_closing;
    } else if (tag.name == "vehicle" && !tag.closing) {
      if (!in_timestep) throw ParseError("<vehicle> outside of <timestep>", tag.line);
      fcd_detail::RawSample s;
      s.time = current_time;
      const std::string& id = fcd_detail::require_attr(tag, "id");
      s.x = fcd_detail::require_double(tag, "x");
      s.y = fcd_detail::require_double(tag, "y");
      s.h = sumo_angle_to_heading(fcd_detail::require_double(tag, "angle"));
      s.u = fcd_detail::require_double(tag, "speed");
      series[id].push_back(s);
    }
  }
  if (times.empty()) throw ParseError("no <timestep> elements found");

  // uniform file step
  double step = t_t;
  if (times.size() >= 2) {
    step = times[1] - times[0];
    for (std::size_t i = 2; i < times.size(); ++i) {
      if (std::abs((times[i] - times[i - 1]) - step) > 1e-6)
        throw ParseError("non-uniform timestep spacing in FCD input");
    }
  }

  // upsample factor (step = m * t_t) or downsample factor (t_t = m * step)
  int up = 0, down = 0;
  const double ratio = step / t_t;
  if (ratio >= 1.0 - 1e-9 && std::abs(ratio - std::llround(ratio)) < 1e-6) {
    up = static_cast<int>(std::llround(ratio));
  } else if (ratio < 1.0 && std::abs(1.0 / ratio - std::llround(1.0 / ratio)) < 1e-6) {
    down = static_cast<int>(std::llround(1.0 / ratio));
  } else {
    std::ostringstream msg;
    msg << "trace timestep " << step << " s does not divide into slots of " << t_t << " s";
    throw ParseError(msg.str());
  }

  // id mapping
  bool all_numeric = true;
  for (const auto& [id, _] : series) {
    VehicleId parsed = 0;
    auto res = std::from_chars(id.data(), id.data() + id.size(), parsed);
    if (res.ec != std::errc() || res.ptr != id.data() + id.size()) {
      all_numeric = false;
      break;
    }
  }

  TraceSet ts;
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  VehicleId next_id = 0;
  for (const auto& [name, raw] : series) {
    VehicleId vid = next_id++;
    if (all_numeric) {
      vid = 0;
      std::from_chars(name.data(), name.data() + name.size(), vid);
    }
    // contiguity in file samples
    for (std::size_t i = 1; i < raw.size(); ++i) {
      if (std::abs((raw[i].time - raw[i - 1].time) - step) > 1e-6)
        throw ParseError("vehicle '" + name + "' is not present in contiguous timesteps");
    }

    VehicleTrace vt;
    vt.id = vid;
    std::vector<VehicleState> slots;
    if (up > 0) {
      vt.first_slot = std::llround(raw.front().time / t_t);
      for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto& s0 = raw[i];
        VehicleState s{s0.x, s0.y, s0.h, s0.u, 0.0, 0.0};
        slots.push_back(s);
        if (i + 1 < raw.size()) {
          const auto& s1 = raw[i + 1];
          for (int k = 1; k < up; ++k) {
            const double f = static_cast<double>(k) / up;
            VehicleState mid;
            mid.x = s0.x + f * (s1.x - s0.x);
            mid.y = s0.y + f * (s1.y - s0.y);
            mid.h = fcd_detail::lerp_heading(s0.h, s1.h, f);
            mid.u = s0.u + f * (s1.u - s0.u);
            slots.push_back(mid);
          }
        }
      }
    } else {
      vt.first_slot = std::llround(raw.front().time / t_t);
      for (std::size_t i = 0; i < raw.size(); i += down) {
        const auto& s0 = raw[i];
        slots.push_back(VehicleState{s0.x, s0.y, s0.h, s0.u, 0.0, 0.0});
      }
    }
    // acceleration / turn rate by central differences on the slot grid
    const std::size_t n = slots.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i == 0 ? 0 : i - 1;
      const std::size_t hi = i + 1 >= n ? n - 1 : i + 1;
      const double span = static_cast<double>(hi - lo) * t_t;
      if (span > 0.0) {
        slots[i].a = (slots[hi].u - slots[lo].u) / span;
        slots[i].omega = wrap_angle(slots[hi].h - slots[lo].h) / span;
      }
      min_x = std::min(min_x, slots[i].x);
      max_x = std::max(max_x, slots[i].x);
      min_y = std::min(min_y, slots[i].y);
      max_y = std::max(max_y, slots[i].y);
    }
    vt.states = std::move(slots);
    ts.vehicles.push_back(std::move(vt));
  }
  ts.finalize();
  if (!ts.vehicles.empty()) ts.area_km2 = (max_x - min_x) * (max_y - min_y) * 1e-6;
  return ts;
}

inline TraceSet load_fcd_trace_file(const std::string& path, double t_t) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open FCD trace '" + path + "'");
  return load_fcd_trace(in, t_t);
}

}  // namespace vdm
