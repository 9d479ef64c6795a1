#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a3sim/geometry.hpp"
#include "a3sim/netspec.hpp"

namespace a3 {

enum class Action {
  program,
  fp_compute,
  ep_compute,
  input_error,
  error_init,
  accumulate,
  mask_update,
  stall,
};

enum class Subject { image, batch, system };

std::string_view to_string(Action action);

/// One weight set: layer `layer` (1-based) of network copy `copy` (0-based).
struct WeightId {
  int layer = 1;
  int copy = 0;
  friend auto operator<=>(const WeightId&, const WeightId&) = default;
};

struct ScheduleEvent {
  int cycle = 1;
  /// 1-based batch the event belongs to.
  int batch = 1;
  Subject subject = Subject::system;
  /// 1-based image index inside the batch; 0 unless subject is an image.
  int image = 0;
  Action action = Action::stall;
  /// 1-based layer whose weights or outputs the action concerns; 0 when none.
  int layer = 0;
  /// Weight copy used by a compute action.
  int copy = 0;
  std::vector<WeightId> programmed;
  std::vector<WeightId> evicted;
};

/// Cycle-ordered schedule of one or more batches.
struct PipelineTrace {
  std::vector<ScheduleEvent> events;
  int total_cycles = 0;
  int overwrite_count = 0;
  /// Last cycle of each batch.
  std::vector<int> batch_end_cycles;
  /// Weights programmed before cycle 1; not counted as overwrites.
  std::vector<WeightId> preloaded;
  /// Crossbars per weight set, indexed by layer - 1.
  std::vector<std::int64_t> layer_costs;
  std::int64_t capacity = 0;
  int copies = 1;
  int batch_size = 1;
  int batches = 1;
};

/// Crossbar cost of each layer in distinct-weight units (single-storage count).
std::vector<std::int64_t> layer_costs(const NetworkSpec& net, const CrossbarGeometry& geom,
                                      int replication = 1);

/// Schedules `batches` batches of `batch_size` images through a net whose layer weights cost
/// `costs` crossbars each, on a pool of `capacity` crossbars holding up to `copies` copies.
///
/// Rules: a layer takes one cycle per image when its weights are resident, and each
/// (copy, layer) stage serves one image per cycle, in image order. Weights are overwritten
/// only after the last image of the batch has used them in the current direction (FP or EP),
/// and only in a cycle with no crossbar compute; every weight set that fits is programmed in
/// that one cycle. Output errors are formed off-crossbar one cycle after an image's last
/// layer; the last one coincides with accumulation. EP then runs once on the accumulated
/// error, one layer per cycle, ending with the input error and the mask update.
///
/// A program cycle makes resident the longest run of upcoming weight uses that fits (all
/// copies of a layer together during FP), and the last program of a batch also reloads the
/// preload set so every batch starts from the same state. With several copies that is not
/// always possible, and a program cycle between batches restores the preload.
PipelineTrace schedule(std::span<const std::int64_t> costs, int batch_size,
                       std::int64_t capacity, int copies = 1, int batches = 1);

PipelineTrace schedule(const NetworkSpec& net, const CrossbarGeometry& geom,
                       std::int64_t capacity, int copies = 1, int batches = 1,
                       int replication = 1);

int overwrite_count(const PipelineTrace& trace);

/// Images per second: images * batches / (total_cycles * cycle_time).
double throughput(const PipelineTrace& trace, double cycle_time_s, int images);

/// CSV with columns cycle,subject,action,layer,weights_programmed.
std::string to_csv(const PipelineTrace& trace);

/// Replays the trace and returns every rule violation found; empty when the trace is legal.
std::vector<std::string> verify_trace(const PipelineTrace& trace);

}  // namespace a3
