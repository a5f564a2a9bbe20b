#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "commlim/blackboard.hpp"
#include "commlim/models.hpp"

namespace commlim {

// Read access to one sensor's sample, one coordinate at a time. Bernoulli
// and multinomial coordinates read as 0/1 (a multinomial outcome is its
// one-hot vector).
class SampleView {
 public:
  virtual ~SampleView() = default;
  virtual double coordinate(int i) const = 0;
};

class ObservationView final : public SampleView {
 public:
  explicit ObservationView(const Observation& x) : x_(&x) {}
  double coordinate(int i) const override;

 private:
  const Observation* x_;
};

// Coordinates drawn on demand from stream `key`; identical to reading the
// corresponding coordinates of sample_one(model, theta, key).
class LazyDraw final : public SampleView {
 public:
  LazyDraw(const Model& model, std::span<const double> theta, std::uint64_t key)
      : model_(&model), theta_(theta), key_(key) {}
  double coordinate(int i) const override;

 private:
  const Model* model_;
  std::span<const double> theta_;
  std::uint64_t key_;
};

struct Estimate {
  std::vector<double> theta;
  bool degenerate = false;
  std::map<std::string, double> diagnostics;
};

// A communication protocol together with its decoder. Sensors write in
// index order; sensor j writes one k-bit message (most significant bit
// first) that may depend on the messages of sensors 0..j-1. Bundles are
// immutable and safe to share across threads.
class ProtocolBundle {
 public:
  ProtocolBundle(Model model, int sensors, int bits);
  virtual ~ProtocolBundle() = default;

  virtual std::string_view name() const = 0;
  // The family the user asked for.
  const Model& model() const { return model_; }
  // The family sensors actually draw from.
  virtual const Model& sampling_model() const { return model_; }
  int sensors() const { return sensors_; }
  int bits() const { return bits_; }

  // Message of `sensor` given its sample and the messages written so far.
  virtual std::uint32_t encode(int sensor, const SampleView& x, std::span<const std::uint32_t> board) const = 0;
  // Throws DecodeError when the board does not have this protocol's shape.
  virtual Estimate decode(std::span<const std::uint32_t> board) const = 0;

  // One execution with sensor j drawing from stream derive_key(key, {j}).
  std::vector<std::uint32_t> simulate(std::span<const double> theta, std::uint64_t key) const;
  std::vector<std::uint32_t> run(std::span<const Observation> samples) const;

  // Equivalent protocol tree (sensor-ordered, k contiguous bits per sensor).
  // Needs nk <= 24.
  ProtocolTree build_tree() const;
  // Splits a full transcript into per-sensor messages.
  std::vector<std::uint32_t> split(const Transcript& y) const;

 protected:
  // Predicate for the bit with index `bit` (0 = first written) of `sensor`'s
  // message. The default tabulates encode over a finite sample space.
  virtual Predicate bit_predicate(int sensor, int bit, std::span<const std::uint32_t> board) const;
  void check_board(std::span<const std::uint32_t> board) const;

 private:
  Model model_;
  int sensors_;
  int bits_;
};

using BundlePtr = std::shared_ptr<const ProtocolBundle>;

// Coordinates are dealt round-robin over k' = min(k, d) slots per sensor:
// slot t of sensor j carries coordinate (j k' + t) mod d, the remaining
// k - k' bits are zero.
class ShardedLayout {
 public:
  ShardedLayout(int sensors, int bits, int dim);
  int slots() const { return slots_; }
  // Coordinate carried by slot t of sensor j.
  int coordinate(int sensor, int slot) const;
  // Number of reports on coordinate i.
  int reports(int i) const { return reports_[static_cast<std::size_t>(i)]; }

 private:
  int sensors_;
  int dim_;
  int slots_;
  std::vector<int> reports_;
};

// Raw Bernoulli bits; decoder is the per-coordinate sample mean.
BundlePtr build_sharded_raw_bits(int n, int k, const Model& model);
// Sign bits 1{x_i > 0}; decoder inverts the probit link and clamps to [-L, L].
BundlePtr build_probit_grouping(int n, int k, const Model& model, double clamp = 1.0);
// Pairs of sensors that jointly produce exact draws from the simplex
// parameter; see SimulateAndInferLayout.
BundlePtr build_simulate_and_infer(int n, int k, const Model& model);

// Group arithmetic: coordinates split into m = ceil(d / b) blocks of size
// b = min(d, 2^k - 2); sensors into N = floor(n / 2m) groups of 2m, the
// rest idle. Odd sensor 2l of a group writes code 0 (no hit in block l),
// 1 (two or more hits) or position + 2 (a unique hit); its partner echoes
// its own bit at that coordinate.
struct SimulateAndInferLayout {
  int block = 0;
  int blocks = 0;
  int groups = 0;
  int idle = 0;
};
SimulateAndInferLayout simulate_and_infer_layout(int n, int k, int d);

// Builds a bundle by protocol name (sharded_bits, probit_grouping,
// simulate_and_infer).
BundlePtr make_bundle(std::string_view protocol, int n, int k, const Model& model, double clamp = 1.0);

// Decodes per-sensor messages produced by `bundle`.
Estimate estimate(const ProtocolBundle& bundle, std::span<const std::uint32_t> messages);
Estimate estimate(const ProtocolBundle& bundle, const Transcript& transcript);

}  // namespace commlim
