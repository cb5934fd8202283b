#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sonograin/corpus.hpp"
#include "sonograin/frame.hpp"
#include "sonograin/synth.hpp"
#include "sonograin/velocity.hpp"

namespace sonograin {

// Transport-independent half of the sonification service: the material catalogue,
// per-session pipelines (pointer -> velocity -> synth -> frame) and the control protocol.
// Time is passed in explicitly as seconds on the server clock, so tests can drive it.

struct MaterialEntry {
  std::string id;
  std::shared_ptr<const Material> material;
  std::filesystem::path image;  // empty if the material has no photo
};

class MaterialRegistry {
 public:
  void add(std::string id, std::shared_ptr<const Material> material, std::filesystem::path image = {}) {
    entries_[id] = MaterialEntry{id, std::move(material), std::move(image)};
  }

  /// Loads every *.json corpus in dir; the id is the file stem, the photo a sibling
  /// <stem>.jpg/.jpeg/.png/.webp if present. Broken corpora are reported to warn and skipped.
  void load_directory(const std::filesystem::path& dir, const WarningSink& warn = warn_to_stderr) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw InputError("corpus directory not found: " + dir.string());
    std::vector<fs::path> manifests;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".json") manifests.push_back(e.path());
    std::sort(manifests.begin(), manifests.end());
    for (const auto& path : manifests) {
      try {
        fs::path image;
        for (const char* ext : {".jpg", ".jpeg", ".png", ".webp"}) {
          auto candidate = fs::path(path).replace_extension(ext);
          if (fs::exists(candidate)) {
            image = candidate;
            break;
          }
        }
        add(path.stem().string(), Material::make(load_corpus(path)), image);
      } catch (const std::exception& e) {
        if (warn) warn("skipping " + path.string() + ": " + e.what());
      }
    }
  }

  const MaterialEntry* find(std::string_view id) const {
    auto it = entries_.find(std::string(id));
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }

  // Body of GET /corpora.
  nlohmann::json catalogue() const {
    auto list = nlohmann::json::array();
    for (const auto& [id, e] : entries_)
      list.push_back({{"id", id},
                      {"fragments", e.material->corpus.size()},
                      {"duration", e.material->corpus.clip().duration_s()},
                      {"image", !e.image.empty()}});
    return list;
  }

 private:
  std::map<std::string, MaterialEntry, std::less<>> entries_;
};

struct SessionConfig {
  std::string corpus_id;
  double dpi = 96.0;
  std::optional<std::uint64_t> seed;
};

struct SessionStats {
  std::uint64_t hops = 0;
  std::uint64_t underruns = 0;
  std::uint64_t selections = 0;
  std::uint64_t events = 0;
  std::uint64_t dropped_events = 0;
};

// Seconds without pointer input after which the pointer counts as lifted.
inline constexpr double kIdleTimeout = 0.1;

class Session {
 public:
  Session(std::string id, std::shared_ptr<const Material> material, const SessionConfig& config,
          const SynthParams& params, std::uint64_t seed)
      : id_(std::move(id)), mm_per_px_(25.4 / config.dpi), seed_(seed), synth_(std::move(material), params, seed) {
    if (!(config.dpi > 0.0)) throw InputError("dpi must be positive");
  }

  const std::string& id() const { return id_; }
  std::uint64_t seed() const { return seed_; }
  const SessionStats& stats() const { return stats_; }
  const Synthesizer& synthesizer() const { return synth_; }

  /// Queues a pointer event (pixels, client seconds) received at server time `now`.
  void ingest(double t, double x_px, double y_px, double now) {
    pending_.push_back({PointerEvent{t, x_px * mm_per_px_, y_px * mm_per_px_}, now});
  }

  /// Velocity the next hop will use: the newest published sample, or zero when idle.
  Vec2 velocity(double now) {
    drain();
    auto v = tracker_.latest();
    if (!v || !last_rx_ || now - *last_rx_ > kIdleTimeout) return {};
    return *v;
  }

  /// Synthesizes the next hop and encodes it as a frame. `late` marks a missed tick deadline.
  void emit_hop(double now, std::vector<unsigned char>& frame, bool late = false) {
    const Vec2 v = velocity(now);
    synth_.process_hop(v, block_);
    encode_frame(sequence_++, block_, frame);
    ++stats_.hops;
    if (late) ++stats_.underruns;
    stats_.selections = synth_.stats().selections;
  }

  std::uint32_t next_sequence() const { return sequence_; }

 private:
  struct Pending {
    PointerEvent event;
    double received;
  };

  void drain() {
    for (const Pending& p : pending_) {
      if (tracker_.push(p.event)) {
        ++stats_.events;
        last_rx_ = p.received;
      } else {
        ++stats_.dropped_events;
      }
    }
    pending_.clear();
  }

  std::string id_;
  double mm_per_px_;
  std::uint64_t seed_;
  Synthesizer synth_;
  VelocityTracker tracker_;
  std::vector<Pending> pending_;
  std::optional<double> last_rx_;
  std::uint32_t sequence_ = 0;
  SessionStats stats_;
  HopBlock block_{};
};

// Session factory shared by all connections; enforces the session cap.
class SessionHub {
 public:
  SessionHub(const MaterialRegistry& registry, SynthParams params = {}, std::size_t capacity = 64)
      : registry_(registry), params_(params), capacity_(capacity) {
    params_.validate();
  }

  const MaterialRegistry& registry() const { return registry_; }
  std::size_t active() const { return active_.load(); }

  // Releases its slot on destruction.
  class Lease {
   public:
    explicit Lease(SessionHub& hub) : hub_(&hub) {}
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease() { --hub_->active_; }

   private:
    SessionHub* hub_;
  };

  struct Opened {
    std::unique_ptr<Session> session;
    std::unique_ptr<Lease> lease;
  };

  /// Throws ProtocolError with code unknown_corpus or capacity.
  Opened open(const SessionConfig& config);

 private:
  const MaterialRegistry& registry_;
  SynthParams params_;
  std::size_t capacity_;
  std::atomic<std::size_t> active_{0};
  std::atomic<std::uint64_t> counter_{0};
};

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

inline SessionHub::Opened SessionHub::open(const SessionConfig& config) {
  const MaterialEntry* entry = registry_.find(config.corpus_id);
  if (!entry) throw ProtocolError("unknown_corpus", "no corpus named '" + config.corpus_id + "'");
  if (!(config.dpi > 0.0)) throw ProtocolError("bad_request", "dpi must be positive");
  if (++active_ > capacity_) {
    --active_;
    throw ProtocolError("capacity", "session limit reached");
  }
  Opened out;
  out.lease = std::make_unique<Lease>(*this);
  std::random_device rd;
  const std::uint64_t seed = config.seed ? *config.seed : (std::uint64_t(rd()) << 32 | rd());
  std::ostringstream id;
  id << std::hex << (std::uint64_t(rd()) << 32 | rd()) << '-' << ++counter_;
  out.session = std::make_unique<Session>(id.str(), entry->material, config, params_, seed);
  return out;
}

inline std::string error_message(std::string_view code, std::string_view message) {
  return nlohmann::json{{"type", "error"}, {"code", code}, {"message", message}}.dump();
}

/// Control-protocol state machine for one client channel.
///
/// Text messages go in through handle_text(), which returns the text replies. While a
/// session is open the transport calls tick() once per 10 ms and sends the returned frame.
class Connection {
 public:
  explicit Connection(SessionHub& hub) : hub_(hub) {}

  bool is_open() const { return session_ != nullptr; }
  bool closed() const { return closed_; }
  Session* session() { return session_.get(); }

  std::vector<std::string> handle_text(std::string_view text, double now) {
    nlohmann::json msg;
    try {
      msg = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      return {error_message("bad_request", "message is not valid JSON")};
    }
    try {
      const std::string type = msg.at("type").get<std::string>();
      if (type == "open") return on_open(msg);
      if (type == "pointer") {
        if (!session_) throw ProtocolError("not_open", "open a session first");
        session_->ingest(msg.at("t").get<double>(), msg.at("x").get<double>(), msg.at("y").get<double>(), now);
        return {};
      }
      if (type == "close") {
        session_.reset();
        lease_.reset();
        closed_ = true;
        return {};
      }
      throw ProtocolError("unknown_type", "unknown message type '" + type + "'");
    } catch (const ProtocolError& e) {
      return {error_message(e.code(), e.what())};
    } catch (const nlohmann::json::exception& e) {
      return {error_message("bad_request", e.what())};
    }
  }

  /// Next audio frame, or false when no session is open.
  bool tick(double now, std::vector<unsigned char>& frame, bool late = false) {
    if (!session_) return false;
    session_->emit_hop(now, frame, late);
    return true;
  }

 private:
  std::vector<std::string> on_open(const nlohmann::json& msg) {
    if (session_) throw ProtocolError("already_open", "session already open");
    SessionConfig config;
    config.corpus_id = msg.at("corpus").get<std::string>();
    if (msg.contains("dpi")) config.dpi = msg.at("dpi").get<double>();
    if (msg.contains("seed") && !msg.at("seed").is_null()) config.seed = msg.at("seed").get<std::uint64_t>();
    auto opened = hub_.open(config);
    session_ = std::move(opened.session);
    lease_ = std::move(opened.lease);
    return {nlohmann::json{{"type", "opened"},
                           {"session", session_->id()},
                           {"sample_rate", kSampleRate},
                           {"block", kHop},
                           {"format", "f32le"}}
                .dump()};
  }

  SessionHub& hub_;
  std::unique_ptr<Session> session_;
  std::unique_ptr<SessionHub::Lease> lease_;
  bool closed_ = false;
};

}  // namespace sonograin
