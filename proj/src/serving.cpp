#include "cascadeserve/serving.hpp"

#include <chrono>

namespace cascadeserve {

namespace {

using SteadyClock = std::chrono::steady_clock;
constexpr auto kSpinWindow = std::chrono::microseconds(1000);

}  // namespace

void sleep_until_precise(SteadyClock::time_point deadline) {
  const auto coarse = deadline - kSpinWindow;
  if (SteadyClock::now() < coarse) std::this_thread::sleep_until(coarse);
  while (SteadyClock::now() < deadline) {
  }
}

std::vector<SampleOutcome> mock_execute(const std::string& model_id,
                                        std::span<const std::int64_t> sample_ids,
                                        const ProfileSet& profiles,
                                        const ValidationSet& validation) {
  const ModelProfile& p = profiles.at(model_id);
  const auto size = static_cast<int>(sample_ids.size());
  if (size > p.max_profiled_batch()) {
    throw Error("batch of " + std::to_string(size) + " exceeds the largest profiled batch of " +
                model_id);
  }
  const auto start = SteadyClock::now();
  auto outcomes = lookup_outcomes(model_id, sample_ids, validation);
  if (size > 0) sleep_until_precise(start + std::chrono::microseconds(p.runtime_us(size)));
  return outcomes;
}

Server::Server(const GearPlan& plan, const ProfileSet& profiles,
               const ValidationSet& validation, ServerConfig config)
    : plan_(plan),
      profiles_(profiles),
      validation_(validation),
      config_(config),
      clock_(ClockMode::kWall) {
  plan_.validate(profiles_);
  validation_.check_covers(profiles_);
  if (config_.measure_period_us <= 0) throw ValidationError("measurement period must be positive");
  if (config_.poll_period_us <= 0) throw ValidationError("poll period must be positive");
}

Server::~Server() {
  if (running_) stop(0);
}

void Server::start() {
  if (running_) throw Error("server is already running");
  clock_ = Clock(ClockMode::kWall);
  EngineOptions eo;
  eo.measure_period_us = config_.measure_period_us;
  eo.alpha = config_.alpha;
  eo.seed = config_.seed;
  eo.record_paths = config_.record_paths;
  {
    std::lock_guard lock(engine_mu_);
    engine_ = std::make_unique<Engine>(plan_, profiles_, validation_, eo);
    next_request_id_ = 0;
  }
  metrics_ = SimMetrics{};
  shutdown_ = false;
  mailboxes_.clear();
  const std::size_t n = engine_->num_devices();
  for (std::size_t d = 0; d < n; ++d) mailboxes_.push_back(std::make_unique<Mailbox>());
  running_ = true;
  accepting_ = true;
  producer_ = std::thread(&Server::producer_loop, this);
  for (std::size_t d = 0; d < n; ++d) {
    executors_.emplace_back(&Server::executor_loop, this, d);
    consumers_.emplace_back(&Server::consumer_loop, this, d);
  }
}

void Server::submit(std::int64_t sample_id) {
  if (!accepting_) throw Error("server is not accepting requests");
  {
    std::lock_guard lock(engine_mu_);
    const Micros now = clock_.now();
    engine_->on_arrival(Request{next_request_id_++, sample_id, now}, now);
  }
  wake_consumers();
}

void Server::wake_consumers() {
  {
    std::lock_guard lock(wake_mu_);
    ++wake_seq_;
  }
  wake_cv_.notify_all();
}

void Server::producer_tick() {
  std::lock_guard lock(engine_mu_);
  if (engine_) engine_->on_measurement(clock_.now());
}

void Server::consumer_poll(std::size_t partition) {
  std::vector<BatchDispatch> batches;
  {
    std::lock_guard lock(engine_mu_);
    if (!engine_) return;
    batches = engine_->poll(clock_.now(), partition);
  }
  for (auto& b : batches) {
    Mailbox& box = *mailboxes_.at(b.device);
    {
      std::lock_guard lock(box.mu);
      box.batches.push_back(std::move(b));
    }
    box.cv.notify_one();
  }
}

void Server::producer_loop() {
  Micros next = config_.measure_period_us;
  while (!shutdown_) {
    const auto deadline = clock_.to_time_point(next);
    {
      std::unique_lock lock(wake_mu_);
      wake_cv_.wait_until(lock, deadline, [this] { return shutdown_.load(); });
    }
    if (shutdown_) break;
    producer_tick();
    wake_consumers();
    next += config_.measure_period_us;
  }
}

void Server::consumer_loop(std::size_t partition) {
  std::uint64_t seen = 0;
  while (!shutdown_) {
    consumer_poll(partition);
    std::unique_lock lock(wake_mu_);
    wake_cv_.wait_for(lock, std::chrono::microseconds(config_.poll_period_us),
                      [&] { return shutdown_.load() || wake_seq_ != seen; });
    seen = wake_seq_;
  }
}

void Server::executor_loop(std::size_t partition) {
  Mailbox& box = *mailboxes_.at(partition);
  while (true) {
    BatchDispatch batch;
    {
      std::unique_lock lock(box.mu);
      box.cv.wait(lock, [&] { return shutdown_.load() || !box.batches.empty(); });
      if (box.batches.empty()) return;
      batch = std::move(box.batches.front());
      box.batches.pop_front();
    }
    // Done at dispatch time plus the profiled runtime.
    const auto ids = batch.sample_ids();
    auto outcomes = lookup_outcomes(batch.model_id, ids, validation_);
    sleep_until_precise(clock_.to_time_point(batch.start_us + batch.runtime_us));
    {
      std::lock_guard lock(engine_mu_);
      engine_->on_batch_complete(batch, outcomes, clock_.now());
    }
    wake_consumers();
  }
}

bool Server::stop(Micros drain_timeout_us) {
  if (!running_) return true;
  accepting_ = false;
  {
    std::lock_guard lock(engine_mu_);
    engine_->mark_trace_end(clock_.now());
  }
  const auto give_up = SteadyClock::now() + std::chrono::microseconds(drain_timeout_us);
  bool drained = false;
  while (true) {
    {
      std::lock_guard lock(engine_mu_);
      drained = engine_->queued() == 0 && engine_->in_flight() == 0;
    }
    if (drained || SteadyClock::now() >= give_up) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }

  shutdown_ = true;
  wake_consumers();
  for (auto& box : mailboxes_) box->cv.notify_all();
  if (producer_.joinable()) producer_.join();
  for (auto& t : consumers_) t.join();
  for (auto& t : executors_) t.join();
  consumers_.clear();
  executors_.clear();
  {
    std::lock_guard lock(engine_mu_);
    metrics_ = engine_->finish(clock_.now());
  }
  running_ = false;
  return drained;
}

Server::Snapshot Server::snapshot() const {
  std::lock_guard lock(engine_mu_);
  Snapshot s;
  if (!engine_) return s;
  s.submitted = engine_->submitted();
  s.completed = engine_->completed();
  s.in_flight = engine_->in_flight();
  s.queued = engine_->queued();
  s.gear = engine_->current_gear();
  return s;
}

std::size_t Server::queue_length(const std::string& replica_id) const {
  std::lock_guard lock(engine_mu_);
  return engine_ ? engine_->queue_length(replica_id) : 0;
}

SimMetrics serve_trace(const GearPlan& plan, const WorkloadTrace& trace,
                       const ValidationSet& validation, const ProfileSet& profiles,
                       const ReplayOptions& options) {
  trace.validate();
  Server server(plan, profiles, validation, options.server);
  server.start();
  for (std::size_t k = 0; k < trace.arrivals.size(); ++k) {
    sleep_until_precise(SteadyClock::now() +
                        std::chrono::microseconds(trace.arrivals[k] - server.now()));
    server.submit(static_cast<std::int64_t>(k));
  }
  const Micros rest = trace.duration_us - server.now();
  if (rest > 0) std::this_thread::sleep_for(std::chrono::microseconds(rest));
  server.stop(options.drain_timeout_us);
  return server.metrics();
}

}  // namespace cascadeserve
