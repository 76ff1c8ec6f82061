#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <variant>

#include "duotilt/types.hpp"

namespace duotilt {

enum class Direction { above, below };

/// Inclusive comparison: above means >=, below means <=.
inline bool satisfies(double value, double level, Direction dir) {
  return dir == Direction::above ? value >= level : value <= level;
}

/// F = 1{S_n[component] relation threshold}, evaluated at step n only.
struct FixedTimeThreshold {
  int n = 1;
  int component = 0;
  double threshold = 0.0;
  Direction direction = Direction::above;
};

/// F = 1{tau_b <= T}; the path stops at min(tau_b, T).
struct FirstPassageBeforeT {
  int component = 0;
  double barrier = 0.0;
  int horizon = 1;
  Direction direction = Direction::above;
};

struct TerminalThreshold {
  int component = 0;
  double threshold = 0.0;
  Direction direction = Direction::below;
};

/// F = 1{passage by T and terminal condition at T}; always runs to T.
struct JointPassageAndTerminal {
  FirstPassageBeforeT passage;
  TerminalThreshold terminal;
};

using EventSpec = std::variant<FixedTimeThreshold, FirstPassageBeforeT, JointPassageAndTerminal>;

inline int horizon(const EventSpec& e) {
  return std::visit(
      [](const auto& ev) -> int {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, FixedTimeThreshold>)
          return ev.n;
        else if constexpr (std::is_same_v<T, FirstPassageBeforeT>)
          return ev.horizon;
        else
          return ev.passage.horizon;
      },
      e);
}

/// Largest observable component the event reads.
inline int max_component(const EventSpec& e) {
  return std::visit(
      [](const auto& ev) -> int {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, JointPassageAndTerminal>)
          return std::max(ev.passage.component, ev.terminal.component);
        else
          return ev.component;
      },
      e);
}

inline void validate_event(const EventSpec& e) {
  if (horizon(e) < 1) throw ValidationError("event horizon must be positive");
  std::visit(
      [](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, JointPassageAndTerminal>) {
          if (ev.passage.component < 0 || ev.terminal.component < 0)
            throw ValidationError("negative event component");
        } else if (ev.component < 0) {
          throw ValidationError("negative event component");
        }
      },
      e);
}

/// Short identifier used in reports, e.g. "fixed(n=10,c0>=0.0769610411)".
inline std::string event_id(const EventSpec& e) {
  auto rel = [](Direction d) { return d == Direction::above ? ">=" : "<="; };
  char buf[192];
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, FixedTimeThreshold>)
          std::snprintf(buf, sizeof buf, "fixed(n=%d,s%d%s%.10g)", ev.n, ev.component,
                        rel(ev.direction), ev.threshold);
        else if constexpr (std::is_same_v<T, FirstPassageBeforeT>)
          std::snprintf(buf, sizeof buf, "passage(T=%d,s%d%s%.10g)", ev.horizon, ev.component,
                        rel(ev.direction), ev.barrier);
        else
          std::snprintf(buf, sizeof buf, "joint(T=%d,s%d%s%.10g,s%d%s%.10g)", ev.passage.horizon,
                        ev.passage.component, rel(ev.passage.direction), ev.passage.barrier,
                        ev.terminal.component, rel(ev.terminal.direction), ev.terminal.threshold);
      },
      e);
  return buf;
}

/**
 * @brief Online evaluation of an event along a path.
 *
 * observe() is called with the observable at steps 0, 1, 2, ... and returns
 * true once the path may stop. absorb() marks a model-declared absorbing
 * state: the event is then settled using the last observation.
 */
class EventTracker {
 public:
  explicit EventTracker(const EventSpec& e) : event_(e) {}

  bool observe(int step, const IncVec& obs) {
    return std::visit(
        [&](const auto& ev) -> bool {
          using T = std::decay_t<decltype(ev)>;
          if constexpr (std::is_same_v<T, FixedTimeThreshold>) {
            if (step >= ev.n) {
              value_ = satisfies(obs[ev.component], ev.threshold, ev.direction) ? 1.0 : 0.0;
              return true;
            }
            return false;
          } else if constexpr (std::is_same_v<T, FirstPassageBeforeT>) {
            if (satisfies(obs[ev.component], ev.barrier, ev.direction)) {
              value_ = 1.0;
              return true;
            }
            return step >= ev.horizon;
          } else {
            if (!passed_ && satisfies(obs[ev.passage.component], ev.passage.barrier,
                                      ev.passage.direction))
              passed_ = true;
            if (step >= ev.passage.horizon) {
              value_ = (passed_ && satisfies(obs[ev.terminal.component], ev.terminal.threshold,
                                             ev.terminal.direction))
                           ? 1.0
                           : 0.0;
              return true;
            }
            return false;
          }
        },
        event_);
  }

  /// Settles the event at an absorbing state whose observable is `obs`.
  void absorb(const IncVec& obs) {
    std::visit(
        [&](const auto& ev) {
          using T = std::decay_t<decltype(ev)>;
          if constexpr (std::is_same_v<T, FixedTimeThreshold>)
            value_ = satisfies(obs[ev.component], ev.threshold, ev.direction) ? 1.0 : 0.0;
          else if constexpr (std::is_same_v<T, FirstPassageBeforeT>)
            value_ = 0.0;  // crossing was already checked at this observation
          else
            value_ = (passed_ && satisfies(obs[ev.terminal.component], ev.terminal.threshold,
                                           ev.terminal.direction))
                         ? 1.0
                         : 0.0;
        },
        event_);
  }

  double value() const { return value_; }
  bool passed() const { return passed_; }

 private:
  EventSpec event_;
  double value_ = 0.0;
  bool passed_ = false;
};

}  // namespace duotilt
