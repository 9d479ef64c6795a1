#include "a3sim/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "a3sim/error.hpp"

namespace a3 {

std::string_view to_string(Action action) {
  switch (action) {
    case Action::program: return "program";
    case Action::fp_compute: return "fp_compute";
    case Action::ep_compute: return "ep_compute";
    case Action::input_error: return "input_error";
    case Action::error_init: return "error_init";
    case Action::accumulate: return "accumulate";
    case Action::mask_update: return "mask_update";
    case Action::stall: return "stall";
  }
  return "?";
}

std::vector<std::int64_t> layer_costs(const NetworkSpec& net, const CrossbarGeometry& geom,
                                      int replication) {
  std::vector<std::int64_t> costs;
  costs.reserve(net.layers.size());
  for (const auto& layer : net.layers)
    costs.push_back(crossbar_requirement(layer, geom, layer.replication.value_or(replication),
                                         StorageMode::single));
  return costs;
}

namespace {

enum class Phase { fp, ep, mask, done };

struct ImageState {
  int group = 0;
  int fp_done = 0;
  int fp_last_cycle = 0;
  bool error_done = false;
};

class Scheduler {
 public:
  Scheduler(std::span<const std::int64_t> costs, int batch_size, std::int64_t capacity,
            int copies)
      : costs_(costs.begin(), costs.end()),
        depth_(static_cast<int>(costs.size())),
        batch_size_(batch_size),
        capacity_(capacity),
        copies_(copies) {}

  PipelineTrace run(int batches) {
    PipelineTrace trace;
    trace.layer_costs = costs_;
    trace.capacity = capacity_;
    trace.copies = copies_;
    trace.batch_size = batch_size_;
    trace.batches = batches;

    reset_batch();
    preload();
    trace.preloaded.assign(resident_.begin(), resident_.end());
    preload_ = resident_;

    int cycle = 0;
    for (int b = 1; b <= batches; ++b) {
      batch_ = b;
      reset_batch();
      while (phase_ != Phase::done) step(++cycle);
      // Only reachable with several copies; one copy always ends on the preload.
      if (b < batches && resident_ != preload_) restore(++cycle);
      trace.batch_end_cycles.push_back(cycle);
    }
    trace.total_cycles = cycle;
    trace.events = std::move(events_);
    trace.overwrite_count = overwrite_count(trace);
    return trace;
  }

 private:
  std::int64_t cost(WeightId w) const { return costs_[static_cast<std::size_t>(w.layer - 1)]; }

  void reset_batch() {
    images_.assign(static_cast<std::size_t>(batch_size_), {});
    for (int i = 0; i < batch_size_; ++i) images_[static_cast<std::size_t>(i)].group = i % copies_;
    phase_ = Phase::fp;
    ep_next_ = depth_;
  }

  int groups_in_use() const { return std::min(copies_, batch_size_); }

  // Weight uses still ahead in this batch, in the order they will be needed. In FP a layer's
  // copies form one unit so that image groups stay in step.
  std::vector<std::vector<WeightId>> need_sequence() const {
    std::vector<std::vector<WeightId>> seq;
    if (phase_ == Phase::fp) {
      for (int l = 1; l <= depth_; ++l) {
        std::vector<WeightId> unit;
        for (int g = 0; g < groups_in_use(); ++g)
          if (std::any_of(images_.begin(), images_.end(),
                          [&](const ImageState& s) { return s.group == g && s.fp_done < l; }))
            unit.push_back({l, g});
        if (!unit.empty()) seq.push_back(std::move(unit));
      }
    }
    if (phase_ == Phase::fp || phase_ == Phase::ep) {
      const int from = phase_ == Phase::fp ? depth_ : ep_next_;
      for (int l = from; l >= 1; --l) seq.push_back({{l, 0}});
    }
    return seq;
  }

  struct Window {
    std::set<WeightId> weights;
    std::vector<WeightId> added;  // in need order
    bool complete = true;         // covers every remaining need
  };

  // Extends `base` with the longest run of whole units that fits. When not even the first
  // unit fits whole, as many of its weights as fit are taken instead.
  Window window(std::set<WeightId> base) const {
    Window w;
    w.weights = std::move(base);
    std::int64_t used = 0;
    for (const auto& x : w.weights) used += cost(x);
    const auto seq = need_sequence();
    for (const auto& unit : seq) {
      std::int64_t extra = 0;
      for (const auto& x : unit)
        if (!w.weights.count(x)) extra += cost(x);
      if (used + extra > capacity_) {
        w.complete = false;
        if (w.added.empty())
          for (const auto& x : unit)
            if (!w.weights.count(x) && used + cost(x) <= capacity_) {
              w.weights.insert(x);
              w.added.push_back(x);
              used += cost(x);
            }
        break;
      }
      for (const auto& x : unit)
        if (w.weights.insert(x).second) w.added.push_back(x);
      used += extra;
    }
    return w;
  }

  void preload() { resident_ = window({}).weights; }

  void emit(ScheduleEvent e) {
    e.batch = batch_;
    events_.push_back(std::move(e));
  }

  void step(int cycle) {
    std::vector<ScheduleEvent> computes;
    std::vector<ScheduleEvent> peripheral;
    bool waiting_on_weights = false;

    if (phase_ == Phase::fp) {
      std::set<WeightId> busy;
      std::vector<int> advanced;
      std::vector<int> stalled;
      for (int i = 0; i < batch_size_; ++i) {
        const auto& s = images_[static_cast<std::size_t>(i)];
        if (s.fp_done == depth_) continue;
        const int l = s.fp_done + 1;
        const WeightId w{l, s.group};
        const int prev = i - copies_;
        const bool in_order = prev < 0 || images_[static_cast<std::size_t>(prev)].fp_done >= l;
        const bool ready = in_order && !busy.count(w);
        if (ready && resident_.count(w)) {
          busy.insert(w);
          advanced.push_back(i);
          computes.push_back(
              {cycle, batch_, Subject::image, i + 1, Action::fp_compute, l, s.group, {}, {}});
        } else {
          if (ready) waiting_on_weights = true;
          if (s.fp_done > 0) stalled.push_back(i);
        }
      }

      // Output errors: one per group per cycle, in image order, after the last layer.
      bool all_done = true;
      for (int g = 0; g < groups_in_use(); ++g) {
        for (int i = 0; i < batch_size_; ++i) {
          auto& s = images_[static_cast<std::size_t>(i)];
          if (s.group != g || s.error_done) continue;
          if (s.fp_done == depth_ && s.fp_last_cycle < cycle) {
            s.error_done = true;
            peripheral.push_back(
                {cycle, batch_, Subject::image, i + 1, Action::error_init, depth_, g, {}, {}});
          }
          break;
        }
      }
      for (const auto& s : images_) all_done = all_done && s.error_done;
      if (all_done) {
        peripheral.push_back({cycle, batch_, Subject::batch, 0, Action::accumulate, depth_, 0,
                              {}, {}});
        phase_ = Phase::ep;
      }

      if (computes.empty() && waiting_on_weights) {
        program_cycle(cycle);
      } else {
        for (int i : advanced) {
          auto& s = images_[static_cast<std::size_t>(i)];
          ++s.fp_done;
          s.fp_last_cycle = cycle;
        }
        for (auto& e : computes) emit(std::move(e));
        for (int i : stalled)
          emit({cycle, batch_, Subject::image, i + 1, Action::stall,
                images_[static_cast<std::size_t>(i)].fp_done + 1,
                images_[static_cast<std::size_t>(i)].group, {}, {}});
      }
      for (auto& e : peripheral) emit(std::move(e));
      return;
    }

    if (phase_ == Phase::ep) {
      const WeightId w{ep_next_, 0};
      if (!resident_.count(w)) {
        program_cycle(cycle);
        return;
      }
      const Action a = ep_next_ == 1 ? Action::input_error : Action::ep_compute;
      emit({cycle, batch_, Subject::batch, 0, a, ep_next_, 0, {}, {}});
      if (--ep_next_ == 0) phase_ = Phase::mask;
      return;
    }

    if (phase_ == Phase::mask) {
      emit({cycle, batch_, Subject::batch, 0, Action::mask_update, 0, 0, {}, {}});
      phase_ = Phase::done;
    }
  }

  // Partially consumed in the current direction; such weights must stay.
  bool pinned(WeightId w) const {
    if (phase_ != Phase::fp) return false;
    int done = 0;
    int size = 0;
    for (const auto& s : images_) {
      if (s.group != w.copy) continue;
      ++size;
      if (s.fp_done >= w.layer) ++done;
    }
    return done > 0 && done < size;
  }

  // With one copy every earlier weight is fully used by now, and how far each window reaches
  // only grows with capacity, so cycles and overwrites never rise with more crossbars.
  void program_cycle(int cycle) {
    std::set<WeightId> keep;
    for (const auto& w : resident_)
      if (pinned(w)) keep.insert(w);
    auto next = window(keep);
    ScheduleEvent e{cycle, batch_, Subject::system, 0, Action::program, 0, 0, {}, {}};
    for (const auto& w : next.added)
      if (!resident_.count(w)) e.programmed.push_back(w);
    if (e.programmed.empty()) {
      const int layer = next.added.empty() && !need_sequence().empty()
                            ? need_sequence().front().front().layer
                            : 0;
      throw ScheduleError(
          fmt::format("no progress possible at cycle {}: weights of layer {} cannot be made "
                      "resident within {} crossbars",
                      cycle, layer, capacity_),
          layer);
    }
    // Last program of the batch: leave the preload behind so the next batch starts clean.
    if (next.complete && std::includes(preload_.begin(), preload_.end(), next.weights.begin(),
                                       next.weights.end()))
      for (const auto& w : preload_)
        if (next.weights.insert(w).second && !resident_.count(w)) e.programmed.push_back(w);
    for (const auto& w : resident_)
      if (!next.weights.count(w)) e.evicted.push_back(w);
    resident_ = std::move(next.weights);
    emit(std::move(e));
  }

  void restore(int cycle) {
    ScheduleEvent e{cycle, batch_, Subject::system, 0, Action::program, 0, 0, {}, {}};
    for (const auto& w : resident_)
      if (!preload_.count(w)) e.evicted.push_back(w);
    for (const auto& w : preload_)
      if (!resident_.count(w)) e.programmed.push_back(w);
    resident_ = preload_;
    emit(std::move(e));
  }

  std::vector<std::int64_t> costs_;
  int depth_;
  int batch_size_;
  std::int64_t capacity_;
  int copies_;

  int batch_ = 1;
  Phase phase_ = Phase::fp;
  int ep_next_ = 0;
  std::vector<ImageState> images_;
  std::set<WeightId> resident_;
  std::set<WeightId> preload_;
  std::vector<ScheduleEvent> events_;
};

std::string weight_name(WeightId w, int copies) {
  if (copies > 1) return fmt::format("W{}.c{}", w.layer, w.copy);
  return fmt::format("W{}", w.layer);
}

}  // namespace

PipelineTrace schedule(std::span<const std::int64_t> costs, int batch_size,
                       std::int64_t capacity, int copies, int batches) {
  if (costs.empty()) throw ScheduleError("network has no layers", 0);
  if (batch_size < 1) throw ScheduleError("batch size must be at least 1", 0);
  if (copies < 1) throw ScheduleError("copies must be at least 1", 0);
  if (batches < 1) throw ScheduleError("batches must be at least 1", 0);
  for (std::size_t l = 0; l < costs.size(); ++l) {
    if (costs[l] < 1)
      throw ScheduleError(fmt::format("layer {} has non-positive cost {}", l + 1, costs[l]),
                          static_cast<int>(l + 1));
    if (costs[l] > capacity)
      throw ScheduleError(fmt::format("layer {} needs {} crossbars but capacity is {}", l + 1,
                                      costs[l], capacity),
                          static_cast<int>(l + 1));
  }
  return Scheduler(costs, batch_size, capacity, copies).run(batches);
}

PipelineTrace schedule(const NetworkSpec& net, const CrossbarGeometry& geom,
                       std::int64_t capacity, int copies, int batches, int replication) {
  const auto costs = layer_costs(net, geom, replication);
  for (std::size_t l = 0; l < costs.size(); ++l)
    if (costs[l] > capacity)
      throw ScheduleError(fmt::format("layer {} ({}) needs {} crossbars but capacity is {}",
                                      l + 1, to_string(net.layers[l].kind), costs[l], capacity),
                          static_cast<int>(l + 1));
  return schedule(costs, net.batch_size, capacity, copies, batches);
}

int overwrite_count(const PipelineTrace& trace) {
  return static_cast<int>(std::count_if(trace.events.begin(), trace.events.end(),
                                        [](const ScheduleEvent& e) {
                                          return e.action == Action::program;
                                        }));
}

double throughput(const PipelineTrace& trace, double cycle_time_s, int images) {
  if (trace.total_cycles <= 0 || cycle_time_s <= 0.0) return 0.0;
  return static_cast<double>(images) * trace.batches /
         (static_cast<double>(trace.total_cycles) * cycle_time_s);
}

std::string to_csv(const PipelineTrace& trace) {
  std::ostringstream out;
  out << "cycle,subject,action,layer,weights_programmed\n";
  for (const auto& e : trace.events) {
    std::string subject;
    switch (e.subject) {
      case Subject::image:
        subject = trace.batches > 1 ? fmt::format("batch{}/image{}", e.batch, e.image)
                                    : fmt::format("image{}", e.image);
        break;
      case Subject::batch:
        subject = trace.batches > 1 ? fmt::format("batch{}", e.batch) : "batch";
        break;
      case Subject::system: subject = "crossbars"; break;
    }
    std::string weights;
    for (std::size_t k = 0; k < e.programmed.size(); ++k) {
      if (k) weights += ';';
      weights += weight_name(e.programmed[k], trace.copies);
    }
    out << e.cycle << ',' << subject << ',' << to_string(e.action) << ',' << e.layer << ','
        << weights << '\n';
  }
  return out.str();
}

std::vector<std::string> verify_trace(const PipelineTrace& trace) {
  std::vector<std::string> problems;
  auto cost = [&](WeightId w) -> std::int64_t {
    if (w.layer < 1 || w.layer > static_cast<int>(trace.layer_costs.size())) return 0;
    return trace.layer_costs[static_cast<std::size_t>(w.layer - 1)];
  };

  const int depth = static_cast<int>(trace.layer_costs.size());

  std::set<WeightId> resident(trace.preloaded.begin(), trace.preloaded.end());
  std::int64_t used = 0;
  for (const auto& w : resident) used += cost(w);
  if (used > trace.capacity)
    problems.push_back(fmt::format("preload uses {} of {} crossbars", used, trace.capacity));

  // Per batch: FP uses of each weight, EP progress.
  int batch = 0;
  std::map<WeightId, int> fp_uses;
  std::set<int> ep_done;
  bool in_ep = false;
  std::map<int, int> group_size;

  std::map<int, std::vector<const ScheduleEvent*>> by_cycle;
  int last_cycle = 0;
  for (const auto& e : trace.events) {
    if (e.cycle < last_cycle) problems.push_back(fmt::format("event at cycle {} out of order", e.cycle));
    last_cycle = std::max(last_cycle, e.cycle);
    by_cycle[e.cycle].push_back(&e);
  }

  for (const auto& [cycle, events] : by_cycle) {
    int programs = 0;
    int computes = 0;
    std::set<WeightId> stage_busy;
    for (const ScheduleEvent* e : events) {
      if (e->batch != batch) {
        batch = e->batch;
        fp_uses.clear();
        ep_done.clear();
        in_ep = false;
        group_size.clear();
        for (int i = 0; i < trace.batch_size; ++i) ++group_size[i % trace.copies];
      }
      switch (e->action) {
        case Action::program: {
          ++programs;
          for (const auto& w : e->evicted) {
            if (!resident.count(w))
              problems.push_back(fmt::format("cycle {}: evicts non-resident W{}", cycle, w.layer));
            bool legal;
            if (!in_ep)
              legal = fp_uses[w] >= group_size[w.copy];
            else
              legal = w.copy != 0 || ep_done.count(w.layer) > 0;
            // A restore after the batch's input error is always legal.
            if (!legal && !(in_ep && static_cast<int>(ep_done.size()) == depth))
              problems.push_back(fmt::format("cycle {}: W{} (copy {}) overwritten before its last use",
                                             cycle, w.layer, w.copy));
            resident.erase(w);
            used -= cost(w);
          }
          for (const auto& w : e->programmed) {
            if (resident.insert(w).second) used += cost(w);
          }
          if (used > trace.capacity)
            problems.push_back(fmt::format("cycle {}: {} crossbars in use, capacity {}", cycle,
                                           used, trace.capacity));
          break;
        }
        case Action::fp_compute: {
          ++computes;
          const WeightId w{e->layer, e->copy};
          if (!resident.count(w))
            problems.push_back(fmt::format("cycle {}: FP layer {} without resident weights",
                                           cycle, e->layer));
          if (!stage_busy.insert(w).second)
            problems.push_back(fmt::format("cycle {}: stage W{} used twice", cycle, e->layer));
          ++fp_uses[w];
          break;
        }
        case Action::ep_compute:
        case Action::input_error: {
          ++computes;
          if (!resident.count({e->layer, 0}))
            problems.push_back(fmt::format("cycle {}: EP layer {} without resident weights",
                                           cycle, e->layer));
          ep_done.insert(e->layer);
          break;
        }
        case Action::accumulate: in_ep = true; break;
        default: break;
      }
    }
    if (programs > 1) problems.push_back(fmt::format("cycle {}: {} program events", cycle, programs));
    if (programs > 0 && computes > 0)
      problems.push_back(fmt::format("cycle {}: program overlaps crossbar compute", cycle));
  }
  if (!trace.events.empty() && last_cycle != trace.total_cycles)
    problems.push_back(fmt::format("last event at cycle {} but total is {}", last_cycle,
                                   trace.total_cycles));
  return problems;
}

}  // namespace a3
