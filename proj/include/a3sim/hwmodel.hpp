#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "a3sim/geometry.hpp"
#include "a3sim/netspec.hpp"
#include "a3sim/pipeline.hpp"

namespace a3 {

enum class DesignPoint { baseline, a3p, a3r, a3px, a3rx, custom };
enum class Budget { same_power, same_area };
enum class EnergyCategory { adc, dac, buffer, crossbar, others };

std::string_view to_string(DesignPoint point);
DesignPoint design_point_from_string(std::string_view text);

inline constexpr double kCycleTime = 50.88e-9;

struct ComponentSpec {
  std::string name;
  double unit_power_w = 0.0;
  double unit_area_mm2 = 0.0;
  std::int64_t count = 0;

  double total_power() const { return unit_power_w * static_cast<double>(count); }
  double total_area() const { return unit_area_mm2 * static_cast<double>(count); }
  friend bool operator==(const ComponentSpec&, const ComponentSpec&) = default;
};

/// Energy category a component belongs to, from its name. Names are "edram",
/// "input_register", "output_register", "crossbar", "dac" and "adc"; anything else is "others".
EnergyCategory category_of(std::string_view component_name);

struct HardwareConfig {
  std::vector<ComponentSpec> components;
  StorageMode storage = StorageMode::dual;
  DesignPoint design_point = DesignPoint::custom;
  double cycle_time_s = kCycleTime;

  const ComponentSpec& component(std::string_view name) const;
  /// Physical crossbars (one per bundle).
  std::int64_t crossbar_count() const { return component("crossbar").count; }
  /// Checks non-negative values and equal crossbar, DAC and ADC counts.
  void validate() const;
  friend bool operator==(const HardwareConfig&, const HardwareConfig&) = default;
};

double total_power(const HardwareConfig& config);
double total_area(const HardwareConfig& config);

/// Power and area of one crossbar with its DAC and ADC.
struct Bundle {
  double power_w = 0.0;
  double area_mm2 = 0.0;
};
Bundle bundle(const HardwareConfig& config);

/// The reference accelerator: 32 MB eDRAM, 128 KB registers, 16128 bundles, dual storage.
HardwareConfig baseline_config();
/// Buffers after shrinking to what error-only propagation needs (2 MB eDRAM, 16 KB registers).
std::vector<ComponentSpec> reduced_buffers();

/// Replaces the baseline buffers with `reduced` and spends the freed power (or area) on
/// extra bundles, floor(freed / per-bundle).
HardwareConfig derive_design_point(const HardwareConfig& baseline,
                                   const std::vector<ComponentSpec>& reduced, Budget budget,
                                   StorageMode storage);

/// Built-in configurations: baseline, a3p, a3r, a3px, a3rx, with the published bundle counts.
HardwareConfig hardware_preset(std::string_view name);
std::vector<std::string> hardware_preset_names();

HardwareConfig parse_hardware(std::string_view text);
HardwareConfig load_hardware(const std::filesystem::path& path);
std::string emit_hardware(const HardwareConfig& config);

/// Crossbars usable for distinct weights: half the count in dual storage.
std::int64_t effective_capacity(const HardwareConfig& config);

/// Forward-pass operations of one image: sum over layers of 2*kh*kw*cin*cout*hout*wout.
std::int64_t forward_ops(const NetworkSpec& net);

/// 16-bit operations of `iterations` passes over `images` images split into `batches` batches.
/// FP runs per image; EP and the mask update run once per batch.
std::int64_t count_ops(const NetworkSpec& net, std::int64_t images, std::int64_t iterations,
                       std::int64_t batches = 1);

struct EnergyBreakdown {
  double adc = 0.0;
  double dac = 0.0;
  double buffer = 0.0;
  double crossbar = 0.0;
  double others = 0.0;

  double total() const { return adc + dac + buffer + crossbar + others; }
};

/// Energy of one trace. Each compute event powers the bundles holding its layer; in dual
/// storage a positive/negative crossbar pair shares one DAC drive and one ADC after the
/// subtraction. Buffers draw full power every cycle. Throws ShapeError when the trace was
/// scheduled for more crossbars than the config provides, or for a net of different depth.
EnergyBreakdown energy_breakdown(const PipelineTrace& trace, const HardwareConfig& config);
EnergyBreakdown energy_breakdown(const PipelineTrace& trace, const HardwareConfig& config,
                                 const NetworkSpec& net);

struct MetricsReport {
  double total_power_w = 0.0;
  double total_area_mm2 = 0.0;
  double runtime_s = 0.0;
  std::int64_t ops = 0;
  /// Giga-operations per second per watt.
  double pe = 0.0;
  /// Giga-operations per second per mm^2.
  double ce = 0.0;
  EnergyBreakdown energy;
  double speedup = 1.0;
  int overwrites = 0;
  int total_cycles = 0;
};

/// Metrics for `iterations` repetitions of the trace. `baseline_runtime_s` <= 0 means the
/// config is its own reference (speedup 1).
MetricsReport metrics(const PipelineTrace& trace, const HardwareConfig& config,
                      const NetworkSpec& net, std::int64_t iterations,
                      double baseline_runtime_s = 0.0);

}  // namespace a3
