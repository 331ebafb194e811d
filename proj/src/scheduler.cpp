#include "axdelay/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "axdelay/error.hpp"

namespace axdelay {

std::size_t DelayHistogram::max_occupied() const {
  for (std::size_t i = counts.size(); i-- > 0;)
    if (counts[i] > 0) return i;
  return 0;
}

DelayHistogram delay_histogram(std::span<const double> d) {
  DelayHistogram h;
  h.total = d.size();
  for (double v : d) {
    const double bin = std::nearbyint(std::max(0.0, v));
    const auto idx = static_cast<std::size_t>(bin);
    if (idx >= h.counts.size()) h.counts.resize(idx + 1, 0);
    h.counts[idx] += 1;
  }
  if (h.counts.empty()) h.counts.push_back(0);
  return h;
}

double window_fraction(const DelayHistogram& hist, std::size_t anchor, std::size_t m,
                       bool include_extra_bin) {
  if (hist.total == 0) return 0.0;
  const std::size_t width = include_extra_bin ? m + 1 : m;
  const std::size_t first = anchor + 1 >= width ? anchor + 1 - width : 0;
  std::size_t sum = 0;
  for (std::size_t i = first; i <= anchor && i < hist.counts.size(); ++i) sum += hist.counts[i];
  return static_cast<double>(sum) / static_cast<double>(hist.total);
}

void SchedulerConfig::validate() const {
  if (m < 1) throw Error(ErrorCode::ConfigInvalid, "window size m must be >= 1");
  if (!(alpha_theta > 0.0) || alpha_theta > 1.0)
    throw Error(ErrorCode::ConfigInvalid, "alpha_theta must lie in (0, 1]");
  if (tsteps < 1) throw Error(ErrorCode::ConfigInvalid, "tsteps must be >= 1");
  if (initial_cap < 0) throw Error(ErrorCode::ConfigInvalid, "initial_cap must be >= 0");
  if (!(hard_ceiling >= initial_cap))
    throw Error(ErrorCode::ConfigInvalid, "hard_ceiling below initial_cap");
}

std::string_view to_string(SchedulePhase phase) {
  switch (phase) {
    case SchedulePhase::pretraining: return "pretraining";
    case SchedulePhase::growing: return "growing";
    case SchedulePhase::stopped: return "stopped";
  }
  return "?";
}

std::string_view to_string(Decision decision) {
  return decision == Decision::grow ? "grow" : "stop";
}

Decision scheduler_decide(LayerSchedule& state, const DelayHistogram& hist,
                          const SchedulerConfig& cfg) {
  state.anchor = hist.max_occupied();
  const double alpha =
      window_fraction(hist, state.anchor, cfg.m, cfg.window_includes_anchor_minus_m);
  if (alpha > cfg.alpha_theta) {
    state.theta_d += 1.0;
    return Decision::grow;
  }
  state.phase = SchedulePhase::stopped;
  return Decision::stop;
}

bool ScheduleState::finished() const {
  return pretrained && std::all_of(per_layer.begin(), per_layer.end(), [](const LayerSchedule& s) {
           return s.phase == SchedulePhase::stopped;
         });
}

ScheduleState initial_schedule_state(const ScheduleTarget& target, const SchedulerConfig& cfg) {
  ScheduleState st;
  st.layers = target.delay_layers();
  if (st.layers.empty())
    throw Error(ErrorCode::ConfigInvalid, "adaptive schedule needs at least one delay layer");
  for (std::size_t i = 0; i < st.layers.size(); ++i)
    st.per_layer.push_back({cfg.initial_cap, 0, SchedulePhase::pretraining});
  return st;
}

bool schedule_round(ScheduleState& state, ScheduleTarget& target, const SchedulerConfig& cfg,
                    std::vector<ScheduleLogEntry>* log) {
  bool any_grew = false;
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    LayerSchedule& ls = state.per_layer[i];
    if (ls.phase != SchedulePhase::growing) continue;
    const std::size_t layer = state.layers[i];
    const auto hist = delay_histogram(target.delays(layer));
    const double alpha =
        window_fraction(hist, hist.max_occupied(), cfg.m, cfg.window_includes_anchor_minus_m);
    const Decision dec = scheduler_decide(ls, hist, cfg);
    if (dec == Decision::grow) {
      if (ls.theta_d > cfg.hard_ceiling)
        throw Error(ErrorCode::NonConvergence,
                    "delay cap of layer " + std::to_string(layer) + " passed the hard ceiling " +
                        std::to_string(cfg.hard_ceiling));
      target.set_cap(layer, ls.theta_d);
      any_grew = true;
    }
    const ScheduleLogEntry entry{layer, state.rounds, alpha, ls.theta_d, dec};
    target.on_decision(entry);
    if (log) log->push_back(entry);
  }
  ++state.rounds;
  if (any_grew) target.train(cfg.tsteps);
  return !state.finished();
}

ScheduleResult run_schedule(ScheduleTarget& target, const SchedulerConfig& cfg) {
  cfg.validate();
  ScheduleState state = initial_schedule_state(target, cfg);
  for (std::size_t layer : state.layers) target.set_cap(layer, cfg.initial_cap);
  target.pretrain(cfg.pretrain_epochs);
  state.pretrained = true;
  for (auto& ls : state.per_layer) ls.phase = SchedulePhase::growing;

  ScheduleResult result;
  while (schedule_round(state, target, cfg, &result.log)) {
  }
  result.layers = state.layers;
  result.rounds = state.rounds;
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    result.caps.push_back(state.per_layer[i].theta_d);
    result.delays.push_back(target.delays(state.layers[i]));
  }
  return result;
}

}  // namespace axdelay
