#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "cascadeserve/domain.hpp"
#include "cascadeserve/sim_engine.hpp"

namespace cascadeserve {

struct ServerConfig {
  Micros measure_period_us = 100'000;
  double alpha = 8.0;
  Micros poll_period_us = 1000;
  std::uint64_t seed = 0;
  bool record_paths = false;
};

/// Blocks for the batch's profiled runtime, then returns each sample's
/// recorded certainty and correctness. Throws on batches above the largest
/// profiled size.
std::vector<SampleOutcome> mock_execute(const std::string& model_id,
                                        std::span<const std::int64_t> sample_ids,
                                        const ProfileSet& profiles,
                                        const ValidationSet& validation);

/// Sleeps until shortly before `deadline`, then spins.
void sleep_until_precise(std::chrono::steady_clock::time_point deadline);

/// Wall-clock server: a producer thread ticking every measurement period,
/// one consumer per device polling its queues, and one executor per device
/// running batches. All of them drive a shared Engine under one mutex.
class Server {
 public:
  Server(const GearPlan& plan, const ProfileSet& profiles, const ValidationSet& validation,
         ServerConfig config = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Fresh engine, empty queues, gear of the lowest range.
  void start();
  bool running() const { return running_.load(); }

  /// Open loop: enqueues at the current wall time and returns. Throws when
  /// the server is not running.
  void submit(std::int64_t sample_id);

  /// Stops accepting requests, waits up to `drain_timeout_us` for queues and
  /// devices to empty, then joins all threads. Returns whether it drained.
  bool stop(Micros drain_timeout_us = 30 * kMicrosPerSecond);

  /// Metrics of the last stopped run.
  const SimMetrics& metrics() const { return metrics_; }

  struct Snapshot {
    std::int64_t submitted = 0;
    std::int64_t completed = 0;
    std::int64_t in_flight = 0;
    std::int64_t queued = 0;
    int gear = 0;
  };
  Snapshot snapshot() const;

  std::size_t num_consumers() const { return consumers_.size(); }
  std::size_t num_producers() const { return producer_.joinable() ? 1 : 0; }
  std::size_t queue_length(const std::string& replica_id) const;
  Micros now() const { return clock_.now(); }

  /// One producer measurement. Also called by the producer thread.
  void producer_tick();
  /// Dispatches whatever the trigger rule allows on one device. Also called
  /// by the consumer threads.
  void consumer_poll(std::size_t partition);

 private:
  struct Mailbox {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<BatchDispatch> batches;
  };

  void producer_loop();
  void consumer_loop(std::size_t partition);
  void executor_loop(std::size_t partition);
  void wake_consumers();

  const GearPlan& plan_;
  const ProfileSet& profiles_;
  const ValidationSet& validation_;
  ServerConfig config_;
  Clock clock_;

  mutable std::mutex engine_mu_;
  std::unique_ptr<Engine> engine_;
  std::int64_t next_request_id_ = 0;

  std::atomic<bool> running_{false};
  std::atomic<bool> accepting_{false};
  std::atomic<bool> shutdown_{false};
  std::mutex wake_mu_;
  std::condition_variable wake_cv_;
  std::uint64_t wake_seq_ = 0;

  std::thread producer_;
  std::vector<std::thread> consumers_;
  std::vector<std::thread> executors_;
  std::vector<std::unique_ptr<Mailbox>> mailboxes_;
  SimMetrics metrics_;
};

struct ReplayOptions {
  ServerConfig server;
  Micros drain_timeout_us = 30 * kMicrosPerSecond;
};

/// Replays the trace in real time from an in-process open-loop client
/// (request k carries sample_id k) and returns the drained metrics.
SimMetrics serve_trace(const GearPlan& plan, const WorkloadTrace& trace,
                       const ValidationSet& validation, const ProfileSet& profiles,
                       const ReplayOptions& options = {});

}  // namespace cascadeserve
