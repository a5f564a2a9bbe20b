#include "commlim/protocols.hpp"

#include <algorithm>
#include <cmath>

#include "commlim/error.hpp"
#include "commlim/normal.hpp"
#include "commlim/rng.hpp"

namespace commlim {

namespace {

constexpr int kMaxTreeDepth = 24;

std::uint32_t set_bit(std::uint32_t message, int bits, int index, bool value) {
  return value ? message | (1U << (bits - 1 - index)) : message;
}

int get_bit(std::uint32_t message, int bits, int index) {
  return static_cast<int>((message >> (bits - 1 - index)) & 1U);
}

class ShardedRawBits final : public ProtocolBundle {
 public:
  ShardedRawBits(int n, int k, const Model& model) : ProtocolBundle(model, n, k), layout_(n, k, model.dim()) {}

  std::string_view name() const override { return "sharded_bits"; }

  std::uint32_t encode(int sensor, const SampleView& x, std::span<const std::uint32_t>) const override {
    std::uint32_t message = 0;
    for (int t = 0; t < layout_.slots(); ++t) {
      message = set_bit(message, bits(), t, x.coordinate(layout_.coordinate(sensor, t)) > 0.5);
    }
    return message;
  }

  Estimate decode(std::span<const std::uint32_t> board) const override {
    check_board(board);
    const int d = model().dim();
    Estimate out;
    out.theta.assign(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < sensors(); ++j) {
      for (int t = 0; t < layout_.slots(); ++t) {
        out.theta[static_cast<std::size_t>(layout_.coordinate(j, t))] += get_bit(board[static_cast<std::size_t>(j)], bits(), t);
      }
    }
    for (int i = 0; i < d; ++i) out.theta[static_cast<std::size_t>(i)] /= layout_.reports(i);
    out.diagnostics["min_reports"] = layout_.reports(d - 1);
    return out;
  }

 private:
  ShardedLayout layout_;
};

class ProbitGrouping final : public ProtocolBundle {
 public:
  ProbitGrouping(int n, int k, const Model& model, double clamp)
      : ProtocolBundle(model, n, k), layout_(n, k, model.dim()), clamp_(clamp) {}

  std::string_view name() const override { return "probit_grouping"; }

  std::uint32_t encode(int sensor, const SampleView& x, std::span<const std::uint32_t>) const override {
    std::uint32_t message = 0;
    for (int t = 0; t < layout_.slots(); ++t) {
      message = set_bit(message, bits(), t, x.coordinate(layout_.coordinate(sensor, t)) > 0.0);
    }
    return message;
  }

  Estimate decode(std::span<const std::uint32_t> board) const override {
    check_board(board);
    const int d = model().dim();
    std::vector<double> positives(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < sensors(); ++j) {
      for (int t = 0; t < layout_.slots(); ++t) {
        positives[static_cast<std::size_t>(layout_.coordinate(j, t))] += get_bit(board[static_cast<std::size_t>(j)], bits(), t);
      }
    }
    Estimate out;
    out.theta.resize(static_cast<std::size_t>(d));
    int saturated = 0;
    for (int i = 0; i < d; ++i) {
      const double m = layout_.reports(i);
      double p = positives[static_cast<std::size_t>(i)] / m;
      if (p <= 0.0 || p >= 1.0) {
        ++saturated;
        p = p <= 0.0 ? 1.0 / (2.0 * m) : 1.0 - 1.0 / (2.0 * m);
      }
      const double raw = -model().sigma() * normal::quantile(1.0 - p);
      out.theta[static_cast<std::size_t>(i)] = std::clamp(raw, -clamp_, clamp_);
    }
    out.diagnostics["saturated_coordinates"] = saturated;
    return out;
  }

 protected:
  Predicate bit_predicate(int sensor, int bit, std::span<const std::uint32_t>) const override {
    Threshold t;
    t.w.assign(static_cast<std::size_t>(model().dim()), 0.0);
    if (bit < layout_.slots()) t.w[static_cast<std::size_t>(layout_.coordinate(sensor, bit))] = 1.0;
    return t;
  }

 private:
  ShardedLayout layout_;
  double clamp_;
};

class SimulateAndInfer final : public ProtocolBundle {
 public:
  SimulateAndInfer(int n, int k, const Model& model)
      : ProtocolBundle(model, n, k),
        sampling_(Model::bernoulli(model.dim(), 0.5)),
        layout_(simulate_and_infer_layout(n, k, model.dim())) {}

  std::string_view name() const override { return "simulate_and_infer"; }
  const Model& sampling_model() const override { return sampling_; }

  std::uint32_t encode(int sensor, const SampleView& x, std::span<const std::uint32_t> board) const override {
    const int group_size = 2 * layout_.blocks;
    if (sensor >= layout_.groups * group_size) return 0;
    const int slot = sensor % group_size;
    const int block = slot / 2;
    if (slot % 2 == 0) {
      const int first = block * layout_.block;
      const int last = std::min(model().dim(), first + layout_.block);
      int hits = 0;
      int position = 0;
      for (int i = first; i < last && hits < 2; ++i) {
        if (x.coordinate(i) > 0.5) {
          ++hits;
          position = i - first;
        }
      }
      if (hits == 0) return 0;
      if (hits >= 2) return 1;
      return static_cast<std::uint32_t>(position + 2);
    }
    const std::uint32_t code = board[static_cast<std::size_t>(sensor - 1)];
    if (code < 2) return 0;
    const int position = static_cast<int>(code) - 2;
    const int i = block * layout_.block + position;
    if (position >= layout_.block || i >= model().dim()) return 0;
    return x.coordinate(i) > 0.5 ? 1U : 0U;
  }

  Estimate decode(std::span<const std::uint32_t> board) const override {
    check_board(board);
    const int d = model().dim();
    const int group_size = 2 * layout_.blocks;
    std::vector<double> counts(static_cast<std::size_t>(d), 0.0);
    int successes = 0;
    for (int g = 0; g < layout_.groups; ++g) {
      const auto* messages = board.data() + static_cast<std::ptrdiff_t>(g) * group_size;
      int reported = 0;
      int index = -1;
      bool clean = true;
      for (int l = 0; l < layout_.blocks; ++l) {
        const std::uint32_t code = messages[2 * l];
        const std::uint32_t echo = messages[2 * l + 1];
        if (code < 2) {
          if (echo != 0) throw DecodeError("partner of a non-reporting sensor wrote a nonzero message");
          if (code == 1) clean = false;
          continue;
        }
        const int position = static_cast<int>(code) - 2;
        const int i = l * layout_.block + position;
        if (position >= layout_.block || i >= d) throw DecodeError("reported index outside its coordinate block");
        if (echo > 1) throw DecodeError("echo message is not a single bit");
        ++reported;
        index = i;
        if (echo != 0) clean = false;
      }
      if (clean && reported == 1) {
        counts[static_cast<std::size_t>(index)] += 1.0;
        ++successes;
      }
    }
    for (int j = layout_.groups * group_size; j < sensors(); ++j) {
      if (board[static_cast<std::size_t>(j)] != 0) throw DecodeError("idle sensor wrote a nonzero message");
    }
    Estimate out;
    if (successes == 0) {
      out.theta.assign(static_cast<std::size_t>(d), 1.0 / d);
      out.degenerate = true;
    } else {
      out.theta.resize(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) out.theta[static_cast<std::size_t>(i)] = counts[static_cast<std::size_t>(i)] / successes;
    }
    out.diagnostics["successes"] = successes;
    out.diagnostics["groups"] = layout_.groups;
    out.diagnostics["idle_sensors"] = layout_.idle;
    return out;
  }

 private:
  Model sampling_;
  SimulateAndInferLayout layout_;
};

void require_budget(int n, int k, int d) {
  if (n <= 0 || k <= 0) throw DomainError("n and k must be positive");
  if (static_cast<long long>(n) * k < d) {
    throw BudgetError("insufficient budget: nk = " + std::to_string(static_cast<long long>(n) * k) + " < d = " +
                      std::to_string(d));
  }
}

}  // namespace

double ObservationView::coordinate(int i) const {
  if (const auto* v = std::get_if<RealVector>(x_)) return v->at(static_cast<std::size_t>(i));
  if (const auto* b = std::get_if<Bits>(x_)) return b->at(static_cast<std::size_t>(i));
  return std::get<Outcome>(*x_).index == i + 1 ? 1.0 : 0.0;
}

double LazyDraw::coordinate(int i) const { return sample_coordinate(*model_, theta_, key_, i); }

ProtocolBundle::ProtocolBundle(Model model, int sensors, int bits)
    : model_(std::move(model)), sensors_(sensors), bits_(bits) {
  if (sensors <= 0) throw DomainError("sensor count must be positive");
  if (bits <= 0 || bits > 31) throw DomainError("bits per sensor must lie in [1, 31]");
}

std::vector<std::uint32_t> ProtocolBundle::simulate(std::span<const double> theta, std::uint64_t key) const {
  model_.check_admissible(theta);
  std::vector<std::uint32_t> board;
  board.reserve(static_cast<std::size_t>(sensors_));
  for (int j = 0; j < sensors_; ++j) {
    const LazyDraw x(sampling_model(), theta, derive_key(key, {static_cast<std::uint64_t>(j)}));
    board.push_back(encode(j, x, board));
  }
  return board;
}

std::vector<std::uint32_t> ProtocolBundle::run(std::span<const Observation> samples) const {
  if (static_cast<int>(samples.size()) != sensors_) throw DomainError("run needs one sample per sensor");
  std::vector<std::uint32_t> board;
  board.reserve(samples.size());
  for (int j = 0; j < sensors_; ++j) {
    sampling_model().check_observation(samples[static_cast<std::size_t>(j)]);
    board.push_back(encode(j, ObservationView(samples[static_cast<std::size_t>(j)]), board));
  }
  return board;
}

Predicate ProtocolBundle::bit_predicate(int sensor, int bit, std::span<const std::uint32_t> board) const {
  const Model& space = sampling_model();
  if (!space.finite()) throw UnsupportedError(std::string(name()) + " has no tree form on continuous inputs");
  TruthTable table;
  table.table.resize(space.sample_space_size());
  for (std::size_t x = 0; x < table.table.size(); ++x) {
    const Observation point = space.point(x);
    table.table[x] = static_cast<std::uint8_t>(get_bit(encode(sensor, ObservationView(point), board), bits_, bit));
  }
  return table;
}

ProtocolTree ProtocolBundle::build_tree() const {
  const long long depth = static_cast<long long>(sensors_) * bits_;
  if (depth > kMaxTreeDepth) throw CapacityError("protocol trees are limited to nk <= 24");
  std::vector<Node> nodes;
  std::vector<std::uint32_t> board;
  const auto grow = [&](auto&& self, int t, std::uint32_t prefix) -> int {
    if (t == depth) return -1;
    const int sensor = t / bits_;
    const int bit = t % bits_;
    const auto index = static_cast<int>(nodes.size());
    nodes.push_back(Node{sensor, bit_predicate(sensor, bit, board), -1, -1});
    for (int b = 0; b < 2; ++b) {
      const std::uint32_t next = (prefix << 1) | static_cast<std::uint32_t>(b);
      int child;
      if (bit == bits_ - 1) {
        board.push_back(next);
        child = self(self, t + 1, 0);
        board.pop_back();
      } else {
        child = self(self, t + 1, next);
      }
      auto& node = nodes[static_cast<std::size_t>(index)];
      (b ? node.right : node.left) = child;
    }
    return index;
  };
  grow(grow, 0, 0);
  return ProtocolTree::uniform(sensors_, bits_, std::move(nodes), 0);
}

std::vector<std::uint32_t> ProtocolBundle::split(const Transcript& y) const {
  if (static_cast<long long>(y.length) != static_cast<long long>(sensors_) * bits_) {
    throw DecodeError("transcript length " + std::to_string(y.length) + " differs from nk = " +
                      std::to_string(static_cast<long long>(sensors_) * bits_));
  }
  std::vector<std::uint32_t> board(static_cast<std::size_t>(sensors_), 0);
  for (int t = 0; t < y.length; ++t) {
    auto& message = board[static_cast<std::size_t>(t / bits_)];
    message = (message << 1) | static_cast<std::uint32_t>(y.bit(t));
  }
  return board;
}

void ProtocolBundle::check_board(std::span<const std::uint32_t> board) const {
  if (static_cast<int>(board.size()) != sensors_) {
    throw DecodeError("expected " + std::to_string(sensors_) + " messages, got " + std::to_string(board.size()));
  }
  const std::uint64_t limit = std::uint64_t{1} << bits_;
  for (std::uint32_t message : board) {
    if (message >= limit) throw DecodeError("message wider than " + std::to_string(bits_) + " bits");
  }
}

ShardedLayout::ShardedLayout(int sensors, int bits, int dim)
    : sensors_(sensors), dim_(dim), slots_(std::min(bits, dim)), reports_(static_cast<std::size_t>(dim), 0) {
  const long long total = static_cast<long long>(sensors) * slots_;
  for (int i = 0; i < dim; ++i) {
    reports_[static_cast<std::size_t>(i)] = static_cast<int>(total / dim + (i < total % dim ? 1 : 0));
  }
}

int ShardedLayout::coordinate(int sensor, int slot) const {
  return static_cast<int>((static_cast<long long>(sensor) * slots_ + slot) % dim_);
}

SimulateAndInferLayout simulate_and_infer_layout(int n, int k, int d) {
  if (n <= 0 || k <= 0 || d <= 0) throw DomainError("n, k and d must be positive");
  if (k < 2) throw DomainError("simulate_and_infer needs k >= 2 (symbols a0, a1 and at least one index)");
  SimulateAndInferLayout layout;
  const long long symbols = k >= 31 ? d : (1LL << k) - 2;
  layout.block = static_cast<int>(std::min<long long>(d, symbols));
  layout.blocks = (d + layout.block - 1) / layout.block;
  const int group_size = 2 * layout.blocks;
  if (n < group_size) {
    throw BudgetError("simulate_and_infer needs n >= 2m = " + std::to_string(group_size) + " for one complete group");
  }
  layout.groups = n / group_size;
  layout.idle = n - layout.groups * group_size;
  return layout;
}

BundlePtr build_sharded_raw_bits(int n, int k, const Model& model) {
  if (model.family() != Family::product_bernoulli) throw DomainError("sharded_bits needs a product_bernoulli model");
  require_budget(n, k, model.dim());
  return std::make_shared<ShardedRawBits>(n, k, model);
}

BundlePtr build_probit_grouping(int n, int k, const Model& model, double clamp) {
  if (model.family() != Family::gaussian_location) throw DomainError("probit_grouping needs a gaussian_location model");
  if (!(clamp > 0.0)) throw DomainError("clamp must be positive");
  require_budget(n, k, model.dim());
  return std::make_shared<ProbitGrouping>(n, k, model, clamp);
}

BundlePtr build_simulate_and_infer(int n, int k, const Model& model) {
  if (model.family() != Family::multinomial) throw DomainError("simulate_and_infer needs a multinomial model");
  simulate_and_infer_layout(n, k, model.dim());
  return std::make_shared<SimulateAndInfer>(n, k, model);
}

BundlePtr make_bundle(std::string_view protocol, int n, int k, const Model& model, double clamp) {
  if (protocol == "sharded_bits") return build_sharded_raw_bits(n, k, model);
  if (protocol == "probit_grouping") return build_probit_grouping(n, k, model, clamp);
  if (protocol == "simulate_and_infer") return build_simulate_and_infer(n, k, model);
  throw DomainError("unknown protocol '" + std::string(protocol) + "'");
}

Estimate estimate(const ProtocolBundle& bundle, std::span<const std::uint32_t> messages) {
  return bundle.decode(messages);
}

Estimate estimate(const ProtocolBundle& bundle, const Transcript& transcript) {
  return bundle.decode(bundle.split(transcript));
}

}  // namespace commlim
