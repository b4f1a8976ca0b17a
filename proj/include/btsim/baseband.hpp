// Per-device baseband: state machine, transmitter, correlating receiver,
// piconet context, buffers, timeouts and RF gating.
#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "btsim/airframe.hpp"
#include "btsim/channel.hpp"
#include "btsim/hopsel.hpp"
#include "btsim/linkman.hpp"
#include "btsim/rng.hpp"

namespace btsim {

enum class DeviceState : std::uint8_t {
  Standby,
  Inquiry,
  InquiryScan,
  InquiryResponse,
  Page,
  PageScan,
  MasterResponse,
  SlaveResponse,
  ConnectionActive,
  Sniff,
  Hold,
  Park,
};
inline constexpr int kNumDeviceStates = 12;
const char* to_string(DeviceState s);
std::optional<DeviceState> state_from_name(const std::string& name);

// Edges of the device state diagram, including link-manager mode edges and
// the DetachReset edge from every state to Standby.
bool legal_transition(DeviceState from, DeviceState to);

enum class Role : std::uint8_t { None, Master, Slave };

struct Timeouts {
  std::int64_t inquiry_timeout = 2048;  // slots
  std::int64_t page_timeout = 2048;
  std::int64_t supervision_timeout = 32;

  void validate() const;  // throws std::invalid_argument
};

struct DeviceConfig {
  std::string name;
  BdAddr addr;
  Timeouts timeouts;

  int listen_window_us = 32;
  int sniff_listen_us = 625;
  int hold_resync_guard_us = 1875;
  int inquiry_scan_interval = 1280;  // slots
  int inquiry_scan_window = 18;      // slots
  bool interlaced_scan = true;
  int backoff_max = 1023;  // slots
  int page_response_timeout = 8;
  int new_connection_timeout = 32;
  int poll_interval = 100;  // slots; 0 disables sync polling
  int buffer_capacity = 8;
  int lmp_retries = 4;
  int inquiry_responses = 1;
  int train_repetitions = kDefaultTrainRepetitions;
  int sync_threshold = kDefaultSyncThreshold;
  bool auto_page = false;                // page every device found by inquiry
  bool page_scan_after_inquiry = false;  // responder moves to PageScan after its FHS
  bool record_packets = true;

  void validate() const;
};

enum class CommandType : std::uint8_t {
  EnableInquiry,
  EnableInquiryScan,
  EnablePage,
  EnablePageScan,
  EnableSniff,
  EnableHold,
  EnablePark,
  ExitSniff,
  DetachReset,
};
const char* to_string(CommandType c);
std::optional<CommandType> command_from_name(const std::string& name);

struct Command {
  CommandType type = CommandType::DetachReset;
  std::optional<BdAddr> target;  // page target, or the member a master negotiates with
  std::uint32_t interval = 0;     // T_sniff / T_hold (slots)
  std::uint32_t attempt = 2;      // sniff_timeout_time (slots)
  bool repeat = false;            // hold: master re-issues the request after each hold
};

class CommandRejected : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class EventType : std::uint8_t {
  StateChanged,
  CommandRejected,
  PacketSent,
  PacketReceived,
  ReceiveError,
  InquiryResponse,
  InquiryComplete,
  InquiryFailed,
  PageComplete,
  PageFailed,
  Connected,
  NegotiationAccepted,
  NegotiationRejected,
  HoldEntered,
  Resync,
  HoldExited,
  Parked,
  LinkLost,
  PacketLost,
  BufferDrop,
  DataDelivered,
};
inline constexpr int kNumEventTypes = int(EventType::DataDelivered) + 1;
const char* to_string(EventType e);
std::optional<EventType> event_from_name(const std::string& name);

struct Event {
  std::int64_t t_us = 0;
  std::uint32_t clk = 0;
  int device = 0;
  EventType type = EventType::StateChanged;
  double value = 0.0;
  std::string detail;
};

struct RfGate {
  bool enable_tx_rf = false;
  bool enable_rx_rf = false;
  int tuned_channel = -1;

  bool operator==(const RfGate&) const = default;
};

struct DeviceCounters {
  std::int64_t rf_tx_us = 0;
  std::int64_t rf_rx_us = 0;
  std::int64_t packets_lost = 0;
  std::int64_t buffer_drops = 0;
  std::int64_t tx_slots = 0;  // master-to-slave slots occupied by transmissions
  std::int64_t delivered = 0;
};

struct Discovered {
  BdAddr addr;
  std::int64_t clock_offset = 0;  // estimated (their CLKN - our CLKN), CLK ticks
};

// Sliding access-code correlator followed by frame collection.
class Receiver {
public:
  void configure(const AccessCode& code, std::uint8_t uap, int threshold);
  void reset();
  // Feeds one observed symbol; returns true when a frame completed.
  bool feed(AirSymbol s, std::int64_t t);
  bool collecting() const { return collecting_; }
  bool carrier() const { return carrier_; }
  std::int64_t carrier_t() const { return carrier_t_; }
  bool just_synced() const { return just_synced_; }
  std::int64_t frame_start() const { return frame_start_; }
  const ParseResult& result() const { return result_; }
  const AccessCode& code() const { return code_; }

private:
  AccessCode code_;
  unsigned __int128 code_bits_ = 0;
  std::uint8_t uap_ = 0;
  int threshold_ = kDefaultSyncThreshold;
  unsigned __int128 bits_ = 0, valid_ = 0, xs_ = 0;
  int count_ = 0;
  bool carrier_ = false;
  std::int64_t carrier_t_ = 0;
  bool collecting_ = false;
  bool just_synced_ = false;
  std::int64_t frame_start_ = 0;
  std::vector<AirSymbol> frame_;
  ParseResult result_;
};

class Device {
public:
  Device(int index, DeviceConfig config, std::uint64_t seed, std::vector<Event>* events);

  // Applies a command at tick t. Throws CommandRejected if illegal from the
  // current state; the device is then unchanged.
  void command(const Command& cmd, std::int64_t t);

  // Phase 1 of a tick: state logic, gates and the transmitted symbol.
  void tx_phase(std::int64_t t);
  std::optional<Transmission> output() const;
  // Phase 2: observation of the (delayed) channel if the rx gate is open.
  void rx_phase(std::int64_t t, AirSymbol observed);

  // Queues a data payload (ACL, LLID 2) for the link to dest. Returns false
  // when no link to dest exists, or when the buffer is full (counted as a
  // buffer drop).
  bool enqueue_data(const BdAddr& dest, PacketKind kind, std::vector<std::uint8_t> payload);

  int index() const { return index_; }
  const DeviceConfig& config() const { return cfg_; }
  DeviceState state() const { return state_; }
  Role role() const { return role_; }
  const RfGate& gate() const { return gate_; }
  const DeviceCounters& counters() const { return counters_; }
  const Rng& rng() const { return rng_; }
  std::int64_t phase_us() const { return phase_us_; }
  std::uint32_t clkn(std::int64_t t) const;
  // Piconet CLK (native clock for masters and unconnected devices).
  std::uint32_t clk(std::int64_t t) const;
  std::uint8_t am_addr() const { return am_addr_; }
  std::optional<BdAddr> master_addr() const { return master_; }
  const std::vector<Discovered>& discovered() const { return discovered_; }
  const ModeTimers& mode_timers() const { return timers_; }
  // Master side: timers installed for the member, if any.
  std::optional<ModeTimers> member_timers(const BdAddr& addr) const;
  std::vector<std::uint8_t> member_am_addrs() const;
  // Master: am_addr each master transmission was addressed to, in order.
  const std::vector<std::uint8_t>& poll_log() const { return poll_log_; }
  const std::deque<std::vector<std::uint8_t>>& rx_buffer() const { return rx_buffer_; }
  // Hands received payloads to the upper layer, emptying the buffer.
  std::deque<std::vector<std::uint8_t>> take_received() { return std::exchange(rx_buffer_, {}); }

private:
  enum class ScanPhase : std::uint8_t { Windowed, Backoff, Rescan };
  enum class RxMode : std::uint8_t { Off, Continuous, Window };

  struct Outgoing {
    PacketKind kind = PacketKind::Null;
    std::uint8_t llid = 2;
    std::vector<std::uint8_t> payload;
    bool lmp = false;
    std::optional<LmpPdu> accepts;  // Accepted: the request it answers
  };

  struct Link {
    BdAddr addr;
    std::uint8_t am = 0;
    LinkMode mode = LinkMode::Active;
    ModeTimers timers;
    bool new_conn = false;
    std::int64_t new_conn_deadline = 0;
    std::int64_t page_start = 0;
    std::deque<Outgoing> data_q;
    std::deque<Outgoing> lmp_q;
    std::optional<Outgoing> in_flight;  // sent, awaiting acknowledgement
    bool in_flight_from_lmp = false;
    int lmp_attempts = 0;
    bool seqn_out = false;
    int last_seqn_in = -1;
    bool arqn_out = false;
    std::int64_t last_tx_slot = -1000000;
    std::int64_t first_unanswered_slot = -1;
    bool hold_repeat = false;
    std::uint32_t hold_interval = 0;
    std::optional<LmpPdu> pending_request;  // request we sent, awaiting answer
    bool dropped = false;
  };

  struct TxJob {
    std::int64_t start = 0;
    int channel = 0;
    Bits bits;
    Packet packet;
    int tag = 0;
  };

  // Clock and time helpers.
  std::int64_t native_us(std::int64_t t) const { return t + phase_us_; }
  std::int64_t pico_us(std::int64_t t) const;
  static std::uint32_t clk_at(std::int64_t us);
  static std::int64_t us_of_clk(std::uint32_t clk);

  void set_state(DeviceState next, std::int64_t t);
  void emit(std::int64_t t, EventType type, double value = 0.0, std::string detail = {});
  void reset_context();

  void schedule_tx(std::int64_t start, int channel, const Packet& p, std::uint8_t uap, int tag = 0);
  void on_tx_complete(const TxJob& job, std::int64_t t);
  bool rx_open(std::int64_t t);
  std::int64_t abs_us_of_clk(std::int64_t t, std::uint32_t target) const;
  void apply_pending_mode(std::int64_t t);
  void finish_inquiry(std::int64_t t, bool timed_out);
  void send_slave_reply(std::int64_t t);
  void sweep_members();
  void set_rx(RxMode mode, int channel, std::int64_t end = 0);
  void configure_rx(const AccessCode& code, std::uint8_t uap);
  bool tx_busy(std::int64_t t) const { return tx_.has_value() && t < tx_->start + std::int64_t(tx_->bits.size()); }

  // Per-state tick logic.
  void tick_inquiry(std::int64_t t);
  void tick_inquiry_scan(std::int64_t t);
  void tick_page(std::int64_t t);
  void tick_page_scan(std::int64_t t);
  void tick_master_response(std::int64_t t);
  void tick_slave_response(std::int64_t t);
  void tick_master(std::int64_t t);
  void tick_slave(std::int64_t t);

  // Frame handlers.
  void on_frame(std::int64_t t);
  void on_inquiry_frame(const Packet& p, std::int64_t t);
  void on_master_frame(const ParseResult& r, std::int64_t t);
  void on_slave_frame(const ParseResult& r, std::int64_t t);

  void start_inquiry(std::int64_t t);
  void start_inquiry_scan(std::int64_t t);
  void start_page(const BdAddr& target, std::int64_t t);
  void next_page_or_idle(std::int64_t t);
  void enter_page_scan(std::int64_t t);
  void enter_slave_connection(std::int64_t t);
  void inquiry_channel_for_scan(std::int64_t t);

  // Connection helpers.
  Link* member_by_am(std::uint8_t am);
  Link* member_by_addr(const BdAddr& addr);
  bool reachable(const Link& l, std::uint32_t clk) const;
  std::optional<Outgoing> next_outgoing(Link& l, std::uint32_t clk, std::int64_t t, bool master_side);
  void handle_payload(Link& l, const Packet& p, std::int64_t t, bool master_side);
  void handle_lmp(Link& l, const LmpPdu& pdu, std::int64_t t, bool master_side);
  void install_mode(Link& l, const LmpPdu& request, std::uint32_t anchor, std::int64_t t, bool master_side);
  void process_ack(Link& l, bool arqn, std::int64_t t);
  void drop_member(Link& l, std::int64_t t, const char* why);
  Packet data_packet(Link& l, const Outgoing& o, std::uint8_t am, const AccessCode& ac);
  void send_connection_packet(std::int64_t t, Link& l, std::optional<Outgoing> o, std::uint32_t clk,
                              std::int64_t slot);

  int index_;
  DeviceConfig cfg_;
  std::int64_t now_ = 0;
  std::int64_t frame_start_ = 0;
  int rx_half_ = 0;
  std::array<std::uint8_t, kHopSetSize> inq_set_{}, inq_resp_set_{}, page_set_{}, presp_set_{};
  std::array<std::uint8_t, kHopSetSize> own_page_set_{}, own_presp_set_{};
  std::optional<LinkMode> pending_mode_;
  std::int64_t hold_until_t_ = 0;
  Rng rng_;
  std::vector<Event>* events_;
  std::int64_t phase_us_ = 0;

  DeviceState state_ = DeviceState::Standby;
  Role role_ = Role::None;
  RfGate gate_;
  DeviceCounters counters_;

  // Transmitter.
  std::optional<TxJob> tx_;
  std::optional<Transmission> out_;
  bool tx_done_event_ = false;

  // Receiver and gate control.
  Receiver rx_;
  RxMode rx_mode_ = RxMode::Off;
  int rx_channel_ = -1;
  std::int64_t rx_window_start_ = 0;
  std::int64_t rx_window_end_ = 0;
  bool rx_window_done_ = false;
  std::int64_t rx_carrier_limit_ = 0;

  // Inquiry / page procedure state.
  std::int64_t proc_start_ = 0;
  std::uint32_t train_origin_ = 0;
  std::array<int, 2> sent_index_{{0, 0}};
  std::vector<Discovered> discovered_;
  ScanPhase scan_phase_ = ScanPhase::Windowed;
  std::int64_t backoff_end_ = 0;
  std::int64_t rescan_start_ = 0;
  int scan_index_ = 0;  // hop set index currently listened on
  std::int64_t response_deadline_ = 0;
  std::deque<BdAddr> page_queue_;
  BdAddr page_target_;
  std::optional<std::int64_t> page_offset_est_;
  int page_k_ = 0;
  std::uint8_t pending_am_ = 0;
  std::int64_t page_resp_start_ = 0;
  bool awaiting_fhs_ack_ = false;
  bool fhs_ack_sent_ = false;
  std::int64_t last_boundary_ = -1;

  // Piconet context.
  std::optional<BdAddr> master_;
  std::int64_t pico_offset_ = 0;
  std::uint8_t am_addr_ = 0;
  std::vector<Link> members_;  // master side
  Link slave_link_;            // slave side
  ModeTimers timers_;
  std::size_t rr_next_ = 0;
  std::int64_t busy_until_ = 0;  // master: no new transmission before this tick
  std::optional<std::uint8_t> awaiting_reply_from_;
  std::int64_t reply_slot_start_ = 0;
  std::int64_t resync_deadline_ = 0;
  bool resyncing_ = false;
  std::int64_t slave_reply_at_ = -1;
  std::vector<std::uint8_t> poll_log_;
  std::deque<std::vector<std::uint8_t>> rx_buffer_;
};

}  // namespace btsim
