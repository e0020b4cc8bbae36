#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace platoon {

enum class Suite { Monotonicity, VerifySoundness, FailsafeMinimality, ConsensusInvariance };

std::optional<Suite> suite_by_name(std::string_view name);
const char* suite_name(Suite s);

struct FuzzConfig {
  Suite suite{Suite::Monotonicity};
  long iterations{100};
  std::uint64_t seed{1};
  bool inject_fault{false};         // deliberately weakens the checked component
  std::optional<double> drop;       // consensus suite: fixed drop probability
  std::optional<int> delay_max;     // consensus suite: fixed maximum delay [steps]
  int rollouts{200};                // verify-soundness: rollouts per case
  int threads{0};                   // 0: PLATOON_SAFE_THREADS or hardware concurrency
};

struct Violation {
  long iteration{0};
  std::string detail;
};

struct FuzzReport {
  Suite suite{Suite::Monotonicity};
  long iterations{0};
  long violations{0};
  std::optional<Violation> first;   // lowest failing iteration
  std::map<std::string, long> counters;
  double seconds{0.0};
};

FuzzReport run_suite(const FuzzConfig& cfg);

/// Re-runs only the iteration recorded in a reproducer.
FuzzReport replay(const FuzzConfig& cfg, long iteration);

void write_reproducer(std::ostream& os, const FuzzConfig& cfg, const Violation& v);
/// Throws std::runtime_error on malformed files.
std::pair<FuzzConfig, long> read_reproducer(const std::string& path);

/// Worker count: `requested` if positive, else PLATOON_SAFE_THREADS, else hardware.
int thread_count(int requested);

}  // namespace platoon
