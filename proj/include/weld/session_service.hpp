#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weld/arc_tracker.hpp"
#include "weld/error.hpp"
#include "weld/guidance.hpp"
#include "weld/lic_map.hpp"
#include "weld/seam_localizer.hpp"
#include "weld/sim_harness.hpp"

namespace weld::session {

inline constexpr std::size_t kDefaultQueueLimit = 256;

enum class FeedMode { kScripted, kDriver };

struct SessionConfig {
  std::string session_id;  // assigned by the service when empty
  FeedMode mode = FeedMode::kScripted;
  std::string scenario_ref;
  sim::Scenario scenario;
  int tile_size = 32;
  lic::LicParams lic;
  arc::TrackerConfig tracker;
  seam::SeamConfig seam;
  guidance::GuidanceConfig guidance;

  /// Guidance speed and frame rate taken from the scenario.
  static SessionConfig for_scenario(const sim::Scenario& scenario, std::string ref = {});
  void validate() const;
};

/// Header line payload: every parameter as key=value, shortest exact form.
std::string config_fields(const SessionConfig& config);
/// Parses the payload written by config_fields; scenario stays default.
SessionConfig parse_config_fields(std::string_view fields);

struct GuidanceUpdate {
  std::int64_t frame = 0;
  std::optional<ImagePoint> c;
  std::optional<ImagePoint> c_smoothed;
  std::optional<ImagePoint> q;
  std::optional<guidance::CueColor> cue;
  double instant_error = 0.0;  // NaN without both C and Q
  double running_error = 0.0;  // NaN before the first scored sample
  bool valid = false;
  std::size_t high_tiles = 0;
  std::size_t medium_tiles = 0;

  /// frame,Cx,Cy,Csx,Csy,Qx,Qy,cue,err,eps_running,valid
  std::string record_line() const;
  /// record_line plus ,high,medium
  std::string wire_line() const;
};

std::string seam_line(const seam::SeamReport& report);
std::string footer_line(const guidance::TrialReport& report);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// One trial: the seam is localized on construction, frames are then ingested
// strictly in timestamp order. Not thread-safe; the service serializes access.
class Session {
 public:
  explicit Session(SessionConfig config);

  const SessionConfig& config() const { return config_; }
  const seam::SeamReport& seam() const { return seam_; }
  const lic::ConfidenceMap& confidence() const { return lic_.current(); }

  GuidanceUpdate ingest_frame(const GrayFrame& frame);
  /// Renders the frame for a driver-mode pointer sample and ingests it.
  GuidanceUpdate ingest_input(std::int64_t t, ImagePoint torch);
  guidance::TrialReport finalize();

  bool finished() const { return report_.has_value(); }
  const std::optional<guidance::TrialReport>& report() const { return report_; }
  std::size_t frames_ingested() const { return updates_.size(); }

  /// Full record text; the footer and hash are present once finalized.
  std::string record_text() const;
  std::string header_text() const;

 private:
  SessionConfig config_;
  sim::Workpiece workpiece_;
  seam::SeamReport seam_;
  lic::LicTracker lic_;
  arc::ArcTracker tracker_;
  guidance::Trial trial_;
  std::optional<std::int64_t> last_frame_;
  std::optional<ImagePoint> strike_origin_;
  std::vector<sim::Waypoint> inputs_;
  std::vector<std::string> updates_;
  std::uint64_t frame_digest_ = 0xcbf29ce484222325ULL;
  std::optional<guidance::TrialReport> report_;
};

struct ParsedRecord {
  SessionConfig config;
  std::string seam;
  std::vector<std::string> updates;
  std::string footer;
};

/// Checks the hash and line grammar; throws CorruptRecord.
ParsedRecord parse_record(std::string_view text);

struct ReplayResult {
  guidance::TrialReport report;
  bool identical = false;
  std::string first_difference;  // empty when identical
};

/// Re-renders the recorded frames from the embedded scenario and reruns the
/// pipeline, comparing every line with the record.
ReplayResult replay(std::string_view record_text);

// Bounded per-subscriber queue. A subscriber whose queue is full when a new
// message arrives is dropped; publishing never blocks.
class Subscription {
 public:
  explicit Subscription(std::size_t limit) : limit_(limit) {}

  /// Blocks until a message, close, or drop. nullopt means the stream ended.
  std::optional<std::string> next();
  std::optional<std::string> try_next();
  bool dropped() const;
  void close();

 private:
  friend class Broadcaster;
  bool push(const std::string& message);  // false once dropped or closed

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  std::size_t limit_;
  bool closed_ = false;
  bool dropped_ = false;
};

class Broadcaster {
 public:
  explicit Broadcaster(std::size_t queue_limit = kDefaultQueueLimit) : limit_(queue_limit) {}

  /// New subscription primed with `preamble`, registered atomically with
  /// respect to publish so no message is missed or duplicated.
  std::shared_ptr<Subscription> subscribe(const std::vector<std::string>& preamble);
  void publish(const std::string& message);
  void close_all();
  std::size_t subscriber_count() const;

 private:
  mutable std::mutex mutex_;
  std::size_t limit_;
  std::vector<std::shared_ptr<Subscription>> subs_;
};

// Live sessions plus the on-disk store: sessions/<id>.rec and
// sessions/index.csv (session,file,gamma).
class SessionService {
 public:
  explicit SessionService(std::filesystem::path data_dir, std::size_t queue_limit = kDefaultQueueLimit);

  std::string create_session(SessionConfig config);
  GuidanceUpdate ingest_frame(const std::string& id, const GrayFrame& frame);
  GuidanceUpdate ingest_input(const std::string& id, std::int64_t t, ImagePoint torch);
  /// Finalizes, persists the record, broadcasts REPORT and closes the streams.
  guidance::TrialReport finalize_session(const std::string& id);
  std::shared_ptr<Subscription> subscribe(const std::string& id);
  /// Protocol messages every subscriber sees first.
  std::vector<std::string> header_messages(const std::string& id) const;
  std::string map_snapshot(const std::string& id) const;
  bool finished(const std::string& id) const;
  /// Runs a scripted session's frames; `realtime` paces them at the frame rate.
  void run_scripted(const std::string& id, bool realtime);
  /// Drops a live session without persisting (client left before finishing).
  void abandon(const std::string& id);

  const std::filesystem::path& data_dir() const { return data_dir_; }
  std::filesystem::path sessions_dir() const { return data_dir_ / "sessions"; }

  /// Appends an index entry and writes the record under sessions/.
  std::filesystem::path persist(const std::string& id, const std::string& record, double gamma);
  void append_index(const std::string& id, const std::string& file, double gamma);
  std::string next_id();
  /// Record file of a session known to the index.
  std::filesystem::path lookup(const std::string& id) const;

 private:
  struct Entry {
    std::mutex pipeline;  // one consumer per session
    std::unique_ptr<Session> session;
    Broadcaster broadcaster;
    std::vector<std::string> header;
    std::optional<std::string> report_message;
    explicit Entry(std::size_t limit) : broadcaster(limit) {}
  };
  std::shared_ptr<Entry> find(const std::string& id) const;

  std::filesystem::path data_dir_;
  std::size_t queue_limit_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
};

std::string hello_message(const std::string& id, const SessionConfig& config);
std::string error_message(const Error& e);

}  // namespace weld::session
