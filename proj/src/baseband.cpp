#include "btsim/baseband.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <stdexcept>

namespace btsim {

namespace {

constexpr std::int64_t kSlot = kSlotUs;
constexpr std::int64_t kHalf = 312;
constexpr std::size_t kMaxFrameSymbols = 5 * kSlotUs;
// Symbols a windowed receiver keeps listening after carrier without sync.
constexpr std::int64_t kCarrierGrace = kIdBits + 8;

constexpr std::array<const char*, kNumDeviceStates> kStateNames = {
    "Standby", "Inquiry",        "InquiryScan",   "InquiryResponse", "Page", "PageScan",
    "MasterResponse", "SlaveResponse", "ConnectionActive", "Sniff", "Hold", "Park"};

int popcount128(unsigned __int128 v) {
  return std::popcount(std::uint64_t(v)) + std::popcount(std::uint64_t(v >> 64));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

}  // namespace

const char* to_string(DeviceState s) { return kStateNames[std::size_t(s)]; }

std::optional<DeviceState> state_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kStateNames.size(); ++i)
    if (name == kStateNames[i]) return DeviceState(i);
  return std::nullopt;
}

bool legal_transition(DeviceState from, DeviceState to) {
  using S = DeviceState;
  if (from == to || to == S::Standby) return true;
  switch (from) {
    case S::Standby:
      return to == S::Inquiry || to == S::InquiryScan || to == S::Page || to == S::PageScan;
    case S::Inquiry:
      return to == S::Page || to == S::ConnectionActive;
    case S::InquiryScan:
      return to == S::InquiryResponse || to == S::PageScan;
    case S::InquiryResponse:
      return to == S::InquiryScan || to == S::PageScan;
    case S::Page:
      return to == S::MasterResponse || to == S::ConnectionActive;
    case S::MasterResponse:
      return to == S::ConnectionActive || to == S::Page;
    case S::PageScan:
      return to == S::SlaveResponse;
    case S::SlaveResponse:
      return to == S::ConnectionActive || to == S::PageScan;
    case S::ConnectionActive:
      return to == S::Sniff || to == S::Hold || to == S::Park || to == S::Page || to == S::Inquiry ||
             to == S::PageScan;
    case S::Sniff:
    case S::Hold:
      return to == S::ConnectionActive;
    case S::Park:
      return to == S::PageScan;
  }
  return false;
}

void Timeouts::validate() const {
  if (inquiry_timeout < 2048 || inquiry_timeout > 98304)
    throw std::invalid_argument("inquiry_timeout: must lie in [2048, 98304] slots");
  if (page_timeout < 1 || page_timeout > 65440)
    throw std::invalid_argument("page_timeout: must lie in [1, 65440] slots");
  if (supervision_timeout < 1) throw std::invalid_argument("supervision_timeout: must be positive");
}

void DeviceConfig::validate() const {
  if (name.empty()) throw std::invalid_argument("name: must not be empty");
  if (!addr.valid()) throw std::invalid_argument("addr: LAP exceeds 24 bits");
  timeouts.validate();
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw std::invalid_argument(std::string(field) + ": must be positive");
  };
  positive(listen_window_us, "listen_window_us");
  positive(sniff_listen_us, "sniff_listen_us");
  positive(inquiry_scan_interval, "inquiry_scan_interval");
  positive(inquiry_scan_window, "inquiry_scan_window");
  positive(page_response_timeout, "page_response_timeout");
  positive(new_connection_timeout, "new_connection_timeout");
  positive(buffer_capacity, "buffer_capacity");
  positive(inquiry_responses, "inquiry_responses");
  positive(train_repetitions, "train_repetitions");
  if (listen_window_us > kSlotUs) throw std::invalid_argument("listen_window_us: must not exceed 625");
  if (sniff_listen_us > kSlotUs) throw std::invalid_argument("sniff_listen_us: must not exceed 625");
  if (hold_resync_guard_us < 0) throw std::invalid_argument("hold_resync_guard_us: must not be negative");
  if (backoff_max < 0) throw std::invalid_argument("backoff_max: must not be negative");
  if (poll_interval < 0) throw std::invalid_argument("poll_interval: must not be negative");
  if (lmp_retries < 0) throw std::invalid_argument("lmp_retries: must not be negative");
  if (sync_threshold < 0 || sync_threshold > 34) throw std::invalid_argument("sync_threshold: must lie in [0, 34]");
  const int scan_span = inquiry_scan_window * (interlaced_scan ? 2 : 1);
  if (scan_span > inquiry_scan_interval)
    throw std::invalid_argument("inquiry_scan_window: scan windows exceed inquiry_scan_interval");
}

const char* to_string(CommandType c) {
  switch (c) {
    case CommandType::EnableInquiry: return "EnableInquiry";
    case CommandType::EnableInquiryScan: return "EnableInquiryScan";
    case CommandType::EnablePage: return "EnablePage";
    case CommandType::EnablePageScan: return "EnablePageScan";
    case CommandType::EnableSniff: return "EnableSniff";
    case CommandType::EnableHold: return "EnableHold";
    case CommandType::EnablePark: return "EnablePark";
    case CommandType::ExitSniff: return "ExitSniff";
    case CommandType::DetachReset: return "DetachReset";
  }
  return "?";
}

std::optional<CommandType> command_from_name(const std::string& name) {
  for (int i = 0; i <= int(CommandType::DetachReset); ++i)
    if (name == to_string(CommandType(i))) return CommandType(i);
  return std::nullopt;
}

const char* to_string(EventType e) {
  switch (e) {
    case EventType::StateChanged: return "StateChanged";
    case EventType::CommandRejected: return "CommandRejected";
    case EventType::PacketSent: return "PacketSent";
    case EventType::PacketReceived: return "PacketReceived";
    case EventType::ReceiveError: return "ReceiveError";
    case EventType::InquiryResponse: return "InquiryResponse";
    case EventType::InquiryComplete: return "InquiryComplete";
    case EventType::InquiryFailed: return "InquiryFailed";
    case EventType::PageComplete: return "PageComplete";
    case EventType::PageFailed: return "PageFailed";
    case EventType::Connected: return "Connected";
    case EventType::NegotiationAccepted: return "NegotiationAccepted";
    case EventType::NegotiationRejected: return "NegotiationRejected";
    case EventType::HoldEntered: return "HoldEntered";
    case EventType::Resync: return "Resync";
    case EventType::HoldExited: return "HoldExited";
    case EventType::Parked: return "Parked";
    case EventType::LinkLost: return "LinkLost";
    case EventType::PacketLost: return "PacketLost";
    case EventType::BufferDrop: return "BufferDrop";
    case EventType::DataDelivered: return "DataDelivered";
  }
  return "?";
}

std::optional<EventType> event_from_name(const std::string& name) {
  for (int i = 0; i < kNumEventTypes; ++i)
    if (name == to_string(EventType(i))) return EventType(i);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Receiver

void Receiver::configure(const AccessCode& code, std::uint8_t uap, int threshold) {
  if (code == code_ && uap == uap_ && threshold == threshold_ && code_bits_ != 0) return;
  code_ = code;
  uap_ = uap;
  threshold_ = threshold;
  const Bits bits = code.bits(false);
  code_bits_ = 0;
  for (int i = 0; i < kIdBits; ++i) code_bits_ |= (unsigned __int128)(bits[std::size_t(i)]) << i;
  reset();
}

void Receiver::reset() {
  bits_ = valid_ = xs_ = 0;
  count_ = 0;
  carrier_ = false;
  collecting_ = false;
  just_synced_ = false;
  frame_.clear();
}

bool Receiver::feed(AirSymbol s, std::int64_t t) {
  just_synced_ = false;
  if (collecting_) {
    if (s == AirSymbol::Z || frame_.size() >= kMaxFrameSymbols) {
      result_ = parse_packet(frame_, code_, uap_, threshold_);
      const std::int64_t start = frame_start_;
      reset();
      frame_start_ = start;
      return true;
    }
    frame_.push_back(s);
    return false;
  }
  if (!carrier_ && s != AirSymbol::Z) {
    carrier_ = true;
    carrier_t_ = t;
  }
  constexpr int top = kIdBits - 1;
  bits_ = (bits_ >> 1) | ((unsigned __int128)(s == AirSymbol::One) << top);
  valid_ = (valid_ >> 1) | ((unsigned __int128)(is_bit(s)) << top);
  xs_ = (xs_ >> 1) | ((unsigned __int128)(s == AirSymbol::X) << top);
  if (count_ < kIdBits) ++count_;
  if (count_ < kIdBits || xs_ != 0) return false;
  const int distance = popcount128((bits_ ^ code_bits_) & valid_) + (kIdBits - popcount128(valid_));
  if (distance > threshold_) return false;
  collecting_ = true;
  just_synced_ = true;
  frame_start_ = t - (kIdBits - 1);
  frame_.clear();
  frame_.reserve(kMaxFrameSymbols);
  for (int i = 0; i < kIdBits; ++i) {
    const bool v = (valid_ >> i) & 1;
    frame_.push_back(v ? bit_symbol(std::uint8_t((bits_ >> i) & 1)) : AirSymbol::Z);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Device: infrastructure

Device::Device(int index, DeviceConfig config, std::uint64_t seed, std::vector<Event>* events)
    : index_(index), cfg_(std::move(config)), rng_(seed), events_(events) {
  cfg_.validate();
  // Random native clock phase over the whole 28-bit clock range.
  phase_us_ = rng_.uniform_int(0, (std::int64_t(1) << 27) * kSlot - 1);
  inq_set_ = hop_set(HopSetKind::Inquiry, inquiry_key());
  inq_resp_set_ = hop_set(HopSetKind::InquiryResponse, inquiry_key());
  own_page_set_ = hop_set(HopSetKind::Page, cfg_.addr.address_key());
  own_presp_set_ = hop_set(HopSetKind::PageResponse, cfg_.addr.address_key());
}

std::uint32_t Device::clk_at(std::int64_t us) {
  const std::int64_t slot = floor_div(us, kSlot);
  const std::int64_t half = floor_mod(us, kSlot) >= kHalf ? 1 : 0;
  return std::uint32_t((slot * 2 + half) & kClockMask);
}

std::int64_t Device::us_of_clk(std::uint32_t clk) {
  return std::int64_t(clk >> 1) * kSlot + (clk & 1) * kHalf;
}

std::int64_t Device::pico_us(std::int64_t t) const {
  if (role_ == Role::Slave && master_) return t + pico_offset_;
  return native_us(t);
}

std::uint32_t Device::clkn(std::int64_t t) const { return clk_at(native_us(t)); }
std::uint32_t Device::clk(std::int64_t t) const { return clk_at(pico_us(t)); }

void Device::emit(std::int64_t t, EventType type, double value, std::string detail) {
  if (!events_) return;
  if (!cfg_.record_packets && (type == EventType::PacketSent || type == EventType::PacketReceived)) return;
  events_->push_back(Event{t, clk(t), index_, type, value, std::move(detail)});
}

void Device::set_state(DeviceState next, std::int64_t t) {
  if (next == state_) return;
  if (!legal_transition(state_, next))
    throw std::logic_error(cfg_.name + ": illegal transition " + to_string(state_) + " -> " + to_string(next));
  emit(t, EventType::StateChanged, double(int(next)), std::string(to_string(state_)) + "->" + to_string(next));
  state_ = next;
  last_boundary_ = -1;
}

void Device::reset_context() {
  role_ = Role::None;
  master_.reset();
  pico_offset_ = 0;
  am_addr_ = 0;
  members_.clear();
  slave_link_ = Link{};
  timers_ = ModeTimers{};
  awaiting_reply_from_.reset();
  busy_until_ = 0;
  resyncing_ = false;
  slave_reply_at_ = -1;
  page_queue_.clear();
  set_rx(RxMode::Off, -1);
  if (tx_) tx_.reset();
}

void Device::schedule_tx(std::int64_t start, int channel, const Packet& p, std::uint8_t uap, int tag) {
  tx_ = TxJob{start, channel, build_packet(p, uap), p, tag};
}

void Device::set_rx(RxMode mode, int channel, std::int64_t end) {
  if (channel != rx_channel_ || mode == RxMode::Off) rx_.reset();
  rx_mode_ = mode;
  rx_channel_ = channel;
  rx_window_end_ = end;
  rx_window_done_ = false;
}

void Device::configure_rx(const AccessCode& code, std::uint8_t uap) {
  rx_.configure(code, uap, cfg_.sync_threshold);
}

std::optional<Transmission> Device::output() const { return out_; }

bool Device::enqueue_data(const BdAddr& dest, PacketKind kind, std::vector<std::uint8_t> payload) {
  Link* l = nullptr;
  if (role_ == Role::Master) {
    l = member_by_addr(dest);
  } else if (role_ == Role::Slave && master_ && *master_ == dest && state_ != DeviceState::Park) {
    l = &slave_link_;
  }
  if (!l) return false;
  if (int(l->data_q.size()) >= cfg_.buffer_capacity) {
    ++counters_.buffer_drops;
    emit(now_, EventType::BufferDrop, 0.0, dest.to_string());
    return false;
  }
  l->data_q.push_back(Outgoing{kind, 2, std::move(payload), false, std::nullopt});
  return true;
}

Device::Link* Device::member_by_am(std::uint8_t am) {
  for (auto& m : members_)
    if (m.am == am) return &m;
  return nullptr;
}

Device::Link* Device::member_by_addr(const BdAddr& addr) {
  for (auto& m : members_)
    if (m.addr == addr) return &m;
  return nullptr;
}

std::optional<ModeTimers> Device::member_timers(const BdAddr& addr) const {
  for (const auto& m : members_)
    if (m.addr == addr) return m.timers;
  return std::nullopt;
}

std::vector<std::uint8_t> Device::member_am_addrs() const {
  std::vector<std::uint8_t> out;
  for (const auto& m : members_) out.push_back(m.am);
  return out;
}

// ---------------------------------------------------------------------------
// Device: tick

namespace {

enum TxTag : int { kTagNone = 0, kTagInquiryFhs, kTagScanId, kTagSlaveAck, kTagSlaveReply };

std::int64_t wrap_signed_clk(std::int64_t v) {
  v &= kClockMask;
  if (v >= (std::int64_t(1) << 27)) v -= std::int64_t(1) << 28;
  return v;
}

}  // namespace

bool Device::rx_open(std::int64_t t) {
  switch (rx_mode_) {
    case RxMode::Off: return false;
    case RxMode::Continuous: return true;
    case RxMode::Window:
      if (rx_window_done_) return false;
      if (t < rx_window_end_ || rx_.collecting()) return true;
      if (rx_.carrier() && t < rx_.carrier_t() + kCarrierGrace) return true;
      rx_window_done_ = true;
      rx_.reset();
      return false;
  }
  return false;
}

void Device::tx_phase(std::int64_t t) {
  now_ = t;
  out_.reset();
  if (tx_ && t >= tx_->start + std::int64_t(tx_->bits.size())) {
    const TxJob done = std::move(*tx_);
    tx_.reset();
    on_tx_complete(done, t);
  }

  switch (state_) {
    case DeviceState::Standby: break;
    case DeviceState::Inquiry: tick_inquiry(t); break;
    case DeviceState::InquiryScan:
    case DeviceState::InquiryResponse: tick_inquiry_scan(t); break;
    case DeviceState::Page: tick_page(t); break;
    case DeviceState::PageScan: tick_page_scan(t); break;
    case DeviceState::MasterResponse: tick_master_response(t); break;
    case DeviceState::SlaveResponse: tick_slave_response(t); break;
    case DeviceState::ConnectionActive:
      if (role_ == Role::Master) tick_master(t);
      else tick_slave(t);
      break;
    case DeviceState::Sniff:
    case DeviceState::Hold:
    case DeviceState::Park: tick_slave(t); break;
  }

  if (tx_ && t >= tx_->start) {
    const auto i = std::size_t(t - tx_->start);
    if (i == 0)
      emit(t, EventType::PacketSent, double(tx_->channel), to_string(tx_->packet.kind));
    out_ = Transmission{index_, tx_->channel, bit_symbol(tx_->bits[i])};
  }
  const bool rx = !out_ && rx_open(t);
  gate_.enable_tx_rf = out_.has_value();
  gate_.enable_rx_rf = rx;
  gate_.tuned_channel = out_ ? out_->rf_channel : (rx ? rx_channel_ : -1);
  counters_.rf_tx_us += gate_.enable_tx_rf;
  counters_.rf_rx_us += gate_.enable_rx_rf;
}

void Device::rx_phase(std::int64_t t, AirSymbol observed) {
  if (!gate_.enable_rx_rf) return;
  const bool done = rx_.feed(observed, t);
  if (rx_.just_synced() && state_ == DeviceState::Hold && resyncing_) {
    resyncing_ = false;
    timers_.mode = LinkMode::Active;
    set_state(DeviceState::ConnectionActive, t);
    emit(t, EventType::HoldExited);
    // Keep the gate open only for the frame now being collected.
    rx_mode_ = RxMode::Window;
    rx_window_end_ = t;
    rx_window_done_ = false;
  }
  if (done) {
    if (rx_mode_ == RxMode::Window) rx_window_done_ = true;
    on_frame(t);
  }
}

void Device::on_tx_complete(const TxJob& job, std::int64_t t) {
  switch (job.tag) {
    case kTagInquiryFhs:
      if (cfg_.page_scan_after_inquiry) {
        enter_page_scan(t);
      } else {
        set_state(DeviceState::InquiryScan, t);
        scan_phase_ = ScanPhase::Backoff;
        backoff_end_ = t + rng_.uniform_int(0, cfg_.backoff_max) * kSlot;
      }
      break;
    case kTagScanId:
      configure_rx(AccessCode::device(cfg_.addr), cfg_.addr.uap);
      set_rx(RxMode::Continuous, own_page_set_[std::size_t(page_k_)]);
      break;
    case kTagSlaveAck:
      enter_slave_connection(t);
      break;
    case kTagSlaveReply:
      if (pending_mode_) apply_pending_mode(t);
      break;
    default:
      break;
  }
}

// ---------------------------------------------------------------------------
// Inquiry

void Device::start_inquiry(std::int64_t t) {
  proc_start_ = t;
  train_origin_ = clkn(t);
  discovered_.clear();
  set_state(DeviceState::Inquiry, t);
  configure_rx(AccessCode::giac(), 0);
  set_rx(RxMode::Off, -1);
}

void Device::finish_inquiry(std::int64_t t, bool timed_out) {
  const double elapsed = double(t - proc_start_) / double(kSlot);
  if (discovered_.empty()) {
    emit(t, EventType::InquiryFailed, elapsed, "timeout");
  } else {
    emit(t, EventType::InquiryComplete, elapsed, timed_out ? "partial" : "");
  }
  set_rx(RxMode::Off, -1);
  if (tx_ && tx_->start > t) tx_.reset();
  if (cfg_.auto_page && !discovered_.empty()) {
    for (const auto& d : discovered_) page_queue_.push_back(d.addr);
    const BdAddr first = page_queue_.front();
    page_queue_.pop_front();
    start_page(first, t);
    return;
  }
  if (role_ == Role::Master && !members_.empty()) {
    set_state(DeviceState::ConnectionActive, t);
  } else {
    set_state(DeviceState::Standby, t);
  }
}

void Device::tick_inquiry(std::int64_t t) {
  if (t - proc_start_ >= cfg_.timeouts.inquiry_timeout * kSlot) {
    finish_inquiry(t, true);
    return;
  }
  const std::int64_t u = native_us(t);
  const std::int64_t off = floor_mod(u, kSlot);
  if (off != 0 && off != kHalf) return;
  const std::uint32_t c = clk_at(u);
  const int h = off == 0 ? 0 : 1;
  if ((c & 2) == 0) {
    if (rx_.collecting()) return;  // a late response is still arriving
    HopContext ctx;
    ctx.mode = HopMode::Inquiry;
    ctx.address_key = inquiry_key();
    ctx.clock = BtClock{c, 0};
    ctx.train_origin = train_origin_;
    ctx.train_repetitions = cfg_.train_repetitions;
    const int k = train_index(ctx);
    sent_index_[std::size_t(h)] = k;
    set_rx(RxMode::Off, -1);
    if (!tx_) schedule_tx(t, inq_set_[std::size_t(k)], Packet{PacketKind::Id, AccessCode::giac(), {}, 2, {}}, 0);
  } else if (!rx_.collecting()) {
    rx_half_ = h;
    configure_rx(AccessCode::giac(), 0);
    set_rx(RxMode::Window, inq_resp_set_[std::size_t(sent_index_[std::size_t(h)])], t + (h == 0 ? kHalf : kSlot - kHalf));
  }
}

void Device::on_inquiry_frame(const Packet& p, std::int64_t t) {
  if (p.kind != PacketKind::Fhs) return;
  const FhsInfo info = decode_fhs(p.payload);
  const std::int64_t est = wrap_signed_clk((std::int64_t(info.clk27_2) << 2) - std::int64_t(clkn(frame_start_)));
  auto it = std::find_if(discovered_.begin(), discovered_.end(), [&](const Discovered& d) { return d.addr == info.addr; });
  if (it == discovered_.end()) {
    discovered_.push_back(Discovered{info.addr, est});
  } else {
    it->clock_offset = est;
  }
  emit(t, EventType::InquiryResponse, double(discovered_.size()), info.addr.to_string());
  if (int(discovered_.size()) >= cfg_.inquiry_responses) finish_inquiry(t, false);
}

void Device::start_inquiry_scan(std::int64_t t) {
  scan_phase_ = ScanPhase::Windowed;
  set_state(DeviceState::InquiryScan, t);
  configure_rx(AccessCode::giac(), 0);
  set_rx(RxMode::Off, -1);
}

void Device::tick_inquiry_scan(std::int64_t t) {
  if (state_ == DeviceState::InquiryResponse) return;
  const std::int64_t u = native_us(t);
  const std::int64_t off = floor_mod(u, kSlot);
  const std::int64_t slot = floor_div(u, kSlot);
  bool force = last_boundary_ < 0;
  if (scan_phase_ == ScanPhase::Backoff) {
    if (t < backoff_end_) {
      if (rx_mode_ != RxMode::Off) set_rx(RxMode::Off, -1);
      return;
    }
    scan_phase_ = ScanPhase::Rescan;
    rescan_start_ = slot;
    force = true;
  }
  if (off != 0 && !force) return;
  last_boundary_ = t;
  if (rx_.collecting()) return;
  const int x = scan_index(inquiry_key(), clk_at(u));
  const int x2 = (x + kHopSetSize / 2) % kHopSetSize;
  const int w = cfg_.inquiry_scan_window;
  int idx = -1;
  if (scan_phase_ == ScanPhase::Windowed) {
    const std::int64_t pos = floor_mod(slot, cfg_.inquiry_scan_interval);
    if (pos < w) idx = x;
    else if (cfg_.interlaced_scan && pos < 2 * w) idx = x2;
  } else {
    const std::int64_t k = (slot - rescan_start_) / w;
    idx = cfg_.interlaced_scan && k % 2 == 1 ? x2 : x;
  }
  if (idx < 0) {
    if (rx_mode_ != RxMode::Off) set_rx(RxMode::Off, -1);
    return;
  }
  scan_index_ = idx;
  configure_rx(AccessCode::giac(), 0);
  const int ch = inq_set_[std::size_t(idx)];
  if (rx_mode_ != RxMode::Continuous || rx_channel_ != ch) set_rx(RxMode::Continuous, ch);
}

// ---------------------------------------------------------------------------
// Page

void Device::start_page(const BdAddr& target, std::int64_t t) {
  if (members_.size() >= 7) {
    emit(t, EventType::PageFailed, 0.0, "piconet full");
    return;
  }
  page_target_ = target;
  page_offset_est_.reset();
  for (const auto& d : discovered_)
    if (d.addr == target) page_offset_est_ = d.clock_offset;
  proc_start_ = t;
  train_origin_ = clkn(t);
  page_set_ = hop_set(HopSetKind::Page, target.address_key());
  presp_set_ = hop_set(HopSetKind::PageResponse, target.address_key());
  set_state(DeviceState::Page, t);
  set_rx(RxMode::Off, -1);
  if (tx_ && tx_->start > t) tx_.reset();
  awaiting_reply_from_.reset();
}

void Device::next_page_or_idle(std::int64_t t) {
  if (!page_queue_.empty()) {
    const BdAddr next = page_queue_.front();
    page_queue_.pop_front();
    start_page(next, t);
    if (state_ == DeviceState::Page) return;
  }
  set_rx(RxMode::Off, -1);
  if (role_ == Role::Master && !members_.empty()) {
    set_state(DeviceState::ConnectionActive, t);
  } else {
    role_ = Role::None;
    set_state(DeviceState::Standby, t);
  }
}

void Device::tick_page(std::int64_t t) {
  if (t - proc_start_ >= cfg_.timeouts.page_timeout * kSlot) {
    emit(t, EventType::PageFailed, double(cfg_.timeouts.page_timeout), page_target_.to_string());
    next_page_or_idle(t);
    return;
  }
  const std::int64_t u = native_us(t);
  const std::int64_t off = floor_mod(u, kSlot);
  if (off != 0 && off != kHalf) return;
  const std::uint32_t c = clk_at(u);
  const int h = off == 0 ? 0 : 1;
  const std::uint32_t key = page_target_.address_key();
  if ((c & 2) == 0) {
    if (rx_.collecting()) return;
    HopContext ctx;
    ctx.mode = HopMode::Page;
    ctx.address_key = key;
    ctx.clock = BtClock{c, 0};
    ctx.train_origin = train_origin_;
    ctx.train_repetitions = cfg_.train_repetitions;
    if (page_offset_est_) {
      ctx.x_est = scan_index(key, std::uint32_t((std::int64_t(c) + *page_offset_est_) & kClockMask));
    } else {
      ctx.cold = true;
    }
    const int k = train_index(ctx);
    sent_index_[std::size_t(h)] = k;
    set_rx(RxMode::Off, -1);
    if (!tx_)
      schedule_tx(t, page_set_[std::size_t(k)],
                  Packet{PacketKind::Id, AccessCode::device(page_target_), {}, 2, {}}, 0);
  } else if (!rx_.collecting()) {
    rx_half_ = h;
    configure_rx(AccessCode::device(page_target_), page_target_.uap);
    set_rx(RxMode::Window, presp_set_[std::size_t(sent_index_[std::size_t(h)])],
           t + (h == 0 ? kHalf : kSlot - kHalf));
  }
}

void Device::tick_master_response(std::int64_t t) {
  if (t - page_resp_start_ >= std::int64_t(cfg_.page_response_timeout) * kSlot) {
    set_rx(RxMode::Off, -1);
    set_state(DeviceState::Page, t);
    return;
  }
  const std::int64_t u = native_us(t);
  if (floor_mod(u, kSlot) != 0) return;
  const std::uint32_t c = clk_at(u);
  if ((c & 2) == 0) {
    set_rx(RxMode::Off, -1);
    if (!tx_) {
      const FhsInfo info{cfg_.addr, c >> 2, pending_am_};
      Packet p{PacketKind::Fhs, AccessCode::device(page_target_), PacketHeader{0, true, false, false}, 2,
               encode_fhs(info)};
      schedule_tx(t, page_set_[std::size_t(page_k_)], p, page_target_.uap);
    }
  } else if (!rx_.collecting()) {
    configure_rx(AccessCode::device(page_target_), page_target_.uap);
    set_rx(RxMode::Window, presp_set_[std::size_t(page_k_)], t + kSlot);
  }
}

void Device::enter_page_scan(std::int64_t t) {
  set_state(DeviceState::PageScan, t);
  configure_rx(AccessCode::device(cfg_.addr), cfg_.addr.uap);
  set_rx(RxMode::Off, -1);
  last_boundary_ = -1;
}

void Device::tick_page_scan(std::int64_t t) {
  const std::int64_t u = native_us(t);
  if (floor_mod(u, kSlot) != 0 && last_boundary_ >= 0) return;
  last_boundary_ = t;
  if (rx_.collecting()) return;
  scan_index_ = scan_index(cfg_.addr.address_key(), clk_at(u));
  configure_rx(AccessCode::device(cfg_.addr), cfg_.addr.uap);
  const int ch = own_page_set_[std::size_t(scan_index_)];
  if (rx_mode_ != RxMode::Continuous || rx_channel_ != ch) set_rx(RxMode::Continuous, ch);
}

void Device::tick_slave_response(std::int64_t t) {
  if (t >= response_deadline_ && !tx_) {
    set_rx(RxMode::Off, -1);
    role_ = Role::None;
    master_.reset();
    enter_page_scan(t);
  }
}

void Device::enter_slave_connection(std::int64_t t) {
  slave_link_ = Link{};
  slave_link_.addr = *master_;
  slave_link_.am = am_addr_;
  slave_link_.new_conn = true;
  slave_link_.new_conn_deadline = t + std::int64_t(cfg_.new_connection_timeout) * kSlot;
  timers_ = ModeTimers{};
  slave_reply_at_ = -1;
  pending_mode_.reset();
  set_state(DeviceState::ConnectionActive, t);
  configure_rx(AccessCode::channel(*master_), master_->uap);
  set_rx(RxMode::Off, -1);
}

// ---------------------------------------------------------------------------
// Frame dispatch

void Device::on_frame(std::int64_t t) {
  const ParseResult r = rx_.result();
  frame_start_ = rx_.frame_start();
  if (!r.ok()) {
    emit(t, EventType::ReceiveError, double(rx_channel_), to_string(r.status));
    if (!(r.status == ParseStatus::PayloadError && r.packet.header)) return;
  } else {
    emit(t, EventType::PacketReceived, double(rx_channel_), to_string(r.packet.kind));
  }
  const Packet& p = r.packet;
  switch (state_) {
    case DeviceState::Inquiry:
      if (r.ok()) on_inquiry_frame(p, t);
      break;
    case DeviceState::InquiryScan:
      if (!r.ok() || p.kind != PacketKind::Id) break;
      if (scan_phase_ == ScanPhase::Windowed) {
        scan_phase_ = ScanPhase::Backoff;
        backoff_end_ = t + rng_.uniform_int(0, cfg_.backoff_max) * kSlot;
        set_rx(RxMode::Off, -1);
      } else if (scan_phase_ == ScanPhase::Rescan) {
        set_state(DeviceState::InquiryResponse, t);
        const std::int64_t start = frame_start_ + kSlot;
        const FhsInfo info{cfg_.addr, clk_at(native_us(start)) >> 2, 0};
        schedule_tx(start, inq_resp_set_[std::size_t(scan_index_)],
                    Packet{PacketKind::Fhs, AccessCode::giac(), PacketHeader{0, true, false, false}, 2,
                           encode_fhs(info)},
                    0, kTagInquiryFhs);
        set_rx(RxMode::Off, -1);
      }
      break;
    case DeviceState::PageScan:
      if (!r.ok() || p.kind != PacketKind::Id) break;
      set_state(DeviceState::SlaveResponse, t);
      page_k_ = scan_index_;
      {
        const std::int64_t start = frame_start_ + kSlot;
        schedule_tx(start, own_presp_set_[std::size_t(page_k_)],
                    Packet{PacketKind::Id, AccessCode::device(cfg_.addr), {}, 2, {}}, 0, kTagScanId);
        response_deadline_ = start + std::int64_t(1 + cfg_.page_response_timeout) * kSlot;
      }
      set_rx(RxMode::Off, -1);
      break;
    case DeviceState::SlaveResponse:
      if (!r.ok() || p.kind != PacketKind::Fhs || tx_) break;
      {
        const FhsInfo info = decode_fhs(p.payload);
        master_ = info.addr;
        am_addr_ = info.am_addr;
        role_ = Role::Slave;
        pico_offset_ = (std::int64_t(info.clk27_2) << 1) * kSlot - frame_start_;
        schedule_tx(frame_start_ + kSlot, own_presp_set_[std::size_t(page_k_)],
                    Packet{PacketKind::Id, AccessCode::device(cfg_.addr), {}, 2, {}}, 0, kTagSlaveAck);
      }
      set_rx(RxMode::Off, -1);
      break;
    case DeviceState::Page:
      if (!r.ok() || p.kind != PacketKind::Id) break;
      page_k_ = sent_index_[std::size_t(rx_half_)];
      pending_am_ = 0;
      for (std::uint8_t am = 1; am <= 7 && pending_am_ == 0; ++am)
        if (!member_by_am(am)) pending_am_ = am;
      page_resp_start_ = t;
      set_rx(RxMode::Off, -1);
      set_state(DeviceState::MasterResponse, t);
      break;
    case DeviceState::MasterResponse:
      if (!r.ok() || p.kind != PacketKind::Id) break;
      {
        Link l;
        l.addr = page_target_;
        l.am = pending_am_;
        l.new_conn = true;
        l.new_conn_deadline = t + std::int64_t(cfg_.new_connection_timeout) * kSlot;
        l.page_start = proc_start_;
        members_.push_back(std::move(l));
      }
      role_ = Role::Master;
      awaiting_reply_from_.reset();
      busy_until_ = 0;
      set_rx(RxMode::Off, -1);
      configure_rx(AccessCode::channel(cfg_.addr), cfg_.addr.uap);
      set_state(DeviceState::ConnectionActive, t);
      break;
    case DeviceState::ConnectionActive:
      if (role_ == Role::Master) on_master_frame(r, t);
      else on_slave_frame(r, t);
      break;
    case DeviceState::Sniff:
    case DeviceState::Hold:
      on_slave_frame(r, t);
      break;
    default:
      break;
  }
}

// ---------------------------------------------------------------------------
// Connection: shared

std::int64_t Device::abs_us_of_clk(std::int64_t t, std::uint32_t target) const {
  const std::int64_t u = pico_us(t);
  const std::int64_t cur_slot = floor_div(u, kSlot);
  const std::uint32_t cur = clk_at(u);
  constexpr std::int64_t kSlotsMask = (std::int64_t(1) << 27) - 1;
  std::int64_t d = (std::int64_t(target >> 1) - std::int64_t(cur >> 1)) & kSlotsMask;
  if (d >= (std::int64_t(1) << 26)) d -= std::int64_t(1) << 27;
  return (cur_slot + d) * kSlot + std::int64_t(target & 1) * kHalf;
}

bool Device::reachable(const Link& l, std::uint32_t c) const {
  switch (l.mode) {
    case LinkMode::Active: return true;
    case LinkMode::Sniff: return sniff_window_open(l.timers, c);
    case LinkMode::Hold:
    case LinkMode::Park: return false;
  }
  return false;
}

Packet Device::data_packet(Link& l, const Outgoing& o, std::uint8_t am, const AccessCode& ac) {
  return Packet{o.kind, ac, PacketHeader{am, true, l.arqn_out, l.seqn_out}, o.llid, o.payload};
}

std::optional<Device::Outgoing> Device::next_outgoing(Link& l, std::uint32_t c, std::int64_t t,
                                                       bool master_side) {
  if (l.in_flight) return l.in_flight;
  std::deque<Outgoing>* q = !l.lmp_q.empty() ? &l.lmp_q : (!l.data_q.empty() ? &l.data_q : nullptr);
  if (!q) return std::nullopt;
  Outgoing o = std::move(q->front());
  q->pop_front();
  l.in_flight_from_lmp = o.lmp;
  l.seqn_out = !l.seqn_out;
  if (o.accepts) {
    auto pdu = decode_lmp(o.payload);
    pdu->anchor = next_anchor(c);
    o.payload = encode(*pdu);
    const LmpPdu request = *o.accepts;
    o.accepts.reset();
    l.in_flight = o;
    install_mode(l, request, pdu->anchor, t, master_side);
    return o;
  }
  l.in_flight = o;
  return o;
}

void Device::process_ack(Link& l, bool arqn, std::int64_t t) {
  if (!l.in_flight) return;
  if (arqn) {
    l.in_flight.reset();
    l.lmp_attempts = 0;
    return;
  }
  ++counters_.packets_lost;
  emit(t, EventType::PacketLost, double(l.am), l.in_flight_from_lmp ? "lmp" : "data");
  if (l.in_flight_from_lmp && ++l.lmp_attempts > cfg_.lmp_retries) {
    l.in_flight.reset();
    l.lmp_attempts = 0;
    if (l.pending_request) {
      emit(t, EventType::NegotiationRejected, 0.0, "retry budget exhausted");
      l.pending_request.reset();
    }
  }
}

void Device::handle_payload(Link& l, const Packet& p, std::int64_t t, bool master_side) {
  l.arqn_out = true;
  if (!is_data_kind(p.kind)) return;
  const int seqn = p.header->seqn ? 1 : 0;
  if (seqn == l.last_seqn_in) return;  // duplicate of an already delivered packet
  l.last_seqn_in = seqn;
  if (p.llid == kLlidLmp) {
    if (auto pdu = decode_lmp(p.payload)) handle_lmp(l, *pdu, t, master_side);
    return;
  }
  if (int(rx_buffer_.size()) >= cfg_.buffer_capacity) {
    ++counters_.buffer_drops;
    emit(t, EventType::BufferDrop, 0.0, "rx");
    return;
  }
  rx_buffer_.push_back(p.payload);
  ++counters_.delivered;
  emit(t, EventType::DataDelivered, double(p.payload.size()));
}

void Device::handle_lmp(Link& l, const LmpPdu& pdu, std::int64_t t, bool master_side) {
  auto respond = [&](LmpOpcode op, const LmpPdu& request) {
    LmpPdu answer = request;
    answer.opcode = op;
    answer.about = request.opcode;
    answer.anchor = 0;
    Outgoing o{PacketKind::Dm1, kLlidLmp, encode(answer), true, std::nullopt};
    if (op == LmpOpcode::Accepted) o.accepts = request;
    l.lmp_q.push_back(std::move(o));
  };
  switch (pdu.opcode) {
    case LmpOpcode::SniffReq:
    case LmpOpcode::HoldReq:
    case LmpOpcode::ParkReq:
    case LmpOpcode::Unsniff: {
      std::string reason = validate_request(pdu);
      const LinkMode mode = master_side ? l.mode : timers_.mode;
      if (reason.empty() && pdu.opcode == LmpOpcode::Unsniff && mode != LinkMode::Sniff)
        reason = "link is not in sniff";
      if (reason.empty() && pdu.opcode != LmpOpcode::Unsniff && mode != LinkMode::Active)
        reason = "link is not active";
      if (!reason.empty()) {
        emit(t, EventType::NegotiationRejected, double(int(pdu.opcode)), reason);
        respond(LmpOpcode::NotAccepted, pdu);
      } else {
        respond(LmpOpcode::Accepted, pdu);
      }
      break;
    }
    case LmpOpcode::Detach:
      if (master_side) {
        emit(t, EventType::LinkLost, 0.0, "detached by peer");
        l.dropped = true;
      } else {
        reset_context();
        set_state(DeviceState::Standby, t);
      }
      break;
    case LmpOpcode::Accepted:
      if (l.pending_request && l.pending_request->opcode == pdu.about) {
        const LmpPdu request = *l.pending_request;
        l.pending_request.reset();
        install_mode(l, request, pdu.anchor, t, master_side);
      }
      break;
    case LmpOpcode::NotAccepted:
      if (l.pending_request && l.pending_request->opcode == pdu.about) {
        l.pending_request.reset();
        emit(t, EventType::NegotiationRejected, double(int(pdu.about)), "not accepted by peer");
      }
      break;
  }
}

void Device::install_mode(Link& l, const LmpPdu& request, std::uint32_t anchor, std::int64_t t,
                          bool master_side) {
  const ModeTimers tm = timers_for(request, anchor);
  emit(t, EventType::NegotiationAccepted, double(int(request.opcode)), to_string(request.opcode));
  if (master_side) {
    l.timers = tm;
    l.mode = tm.mode;
    l.first_unanswered_slot = -1;
    if (tm.mode == LinkMode::Park) {
      emit(t, EventType::Parked, double(l.am), l.addr.to_string());
      l.dropped = true;
    }
    return;
  }
  timers_ = tm;
  switch (tm.mode) {
    case LinkMode::Sniff: set_state(DeviceState::Sniff, t); break;
    case LinkMode::Active: set_state(DeviceState::ConnectionActive, t); break;
    case LinkMode::Hold:
    case LinkMode::Park: pending_mode_ = tm.mode; break;
  }
}

void Device::apply_pending_mode(std::int64_t t) {
  const LinkMode m = *pending_mode_;
  pending_mode_.reset();
  set_rx(RxMode::Off, -1);
  if (m == LinkMode::Hold) {
    hold_until_t_ = t + (abs_us_of_clk(t, timers_.hold_until) - pico_us(t));
    resyncing_ = false;
    set_state(DeviceState::Hold, t);
    emit(t, EventType::HoldEntered, double(hold_until_t_ - t) / double(kSlot));
  } else if (m == LinkMode::Park) {
    set_state(DeviceState::Park, t);
    emit(t, EventType::Parked, double(am_addr_));
    am_addr_ = 0;
    slave_link_.data_q.clear();
    slave_link_.lmp_q.clear();
    slave_link_.in_flight.reset();
  }
}

// ---------------------------------------------------------------------------
// Connection: master

void Device::sweep_members() {
  std::erase_if(members_, [](const Link& l) { return l.dropped; });
  if (rr_next_ >= members_.size()) rr_next_ = 0;
}

void Device::send_connection_packet(std::int64_t t, Link& l, std::optional<Outgoing> o, std::uint32_t c,
                                    std::int64_t slot) {
  const AccessCode ac = AccessCode::channel(cfg_.addr);
  const Packet p = o ? data_packet(l, *o, l.am, ac)
                     : Packet{PacketKind::Poll, ac, PacketHeader{l.am, true, l.arqn_out, l.seqn_out}, 2, {}};
  const int n = traits(p.kind).slots;
  schedule_tx(t, connection_channel(cfg_.addr.address_key(), c), p, cfg_.addr.uap);
  awaiting_reply_from_ = l.am;
  reply_slot_start_ = t + n * kSlot;
  busy_until_ = t + (n + 1) * kSlot;
  l.last_tx_slot = slot;
  counters_.tx_slots += n;
  poll_log_.push_back(l.am);
}

void Device::tick_master(std::int64_t t) {
  const std::int64_t u = native_us(t);
  if (floor_mod(u, kSlot) != 0) return;
  const std::uint32_t c = clk_at(u);
  const std::int64_t slot = floor_div(u, kSlot);

  if (awaiting_reply_from_ && t == reply_slot_start_ && !tx_) {
    const Link* l = member_by_am(*awaiting_reply_from_);
    const int len = l && l->new_conn ? kSlotUs : cfg_.listen_window_us;
    configure_rx(AccessCode::channel(cfg_.addr), cfg_.addr.uap);
    set_rx(RxMode::Window, connection_channel(cfg_.addr.address_key(), c), t + len);
  }
  if ((c & 2) != 0 || t < busy_until_ || tx_ || rx_.collecting()) return;

  if (awaiting_reply_from_) {
    if (Link* l = member_by_am(*awaiting_reply_from_)) {
      process_ack(*l, false, t);
      l->arqn_out = false;
      if (l->first_unanswered_slot < 0) l->first_unanswered_slot = l->last_tx_slot;
    }
    awaiting_reply_from_.reset();
  }

  for (auto& m : members_) {
    if (m.new_conn && t >= m.new_conn_deadline) {
      emit(t, EventType::PageFailed, double(cfg_.new_connection_timeout), "new connection timeout");
      m.dropped = true;
      continue;
    }
    if (m.first_unanswered_slot >= 0) {
      std::int64_t limit = cfg_.timeouts.supervision_timeout;
      if (m.mode == LinkMode::Sniff) limit = std::max<std::int64_t>(limit, 3 * std::int64_t(m.timers.t_sniff));
      if (slot - m.first_unanswered_slot >= limit) {
        emit(t, EventType::LinkLost, double(m.am), "supervision timeout");
        m.dropped = true;
        continue;
      }
    }
    if (m.mode == LinkMode::Hold && clk_reached(c, m.timers.hold_until)) {
      m.mode = LinkMode::Active;
      if (m.hold_repeat && !m.pending_request) {
        const LmpPdu req{LmpOpcode::HoldReq, LmpOpcode::Detach, m.hold_interval, 0, 0};
        m.lmp_q.push_back(Outgoing{PacketKind::Dm1, kLlidLmp, encode(req), true, std::nullopt});
        m.pending_request = req;
      } else {
        m.last_tx_slot = std::numeric_limits<std::int64_t>::min() / 4;
      }
    }
  }
  sweep_members();
  if (members_.empty()) {
    if (!page_queue_.empty()) {
      next_page_or_idle(t);
      return;
    }
    role_ = Role::None;
    set_rx(RxMode::Off, -1);
    set_state(DeviceState::Standby, t);
    return;
  }

  Link* target = nullptr;
  std::optional<Outgoing> o;
  for (auto& m : members_) {
    if (m.new_conn) {
      target = &m;
      break;
    }
  }
  if (!target) {
    for (auto& m : members_) {
      if (!reachable(m, c)) continue;
      if ((m.in_flight && m.in_flight_from_lmp) || (!m.in_flight && !m.lmp_q.empty())) {
        target = &m;
        o = next_outgoing(m, c, t, true);
        break;
      }
    }
  }
  const std::size_t n = members_.size();
  if (!target) {
    for (std::size_t i = 0; i < n; ++i) {
      Link& m = members_[(rr_next_ + i) % n];
      if (!reachable(m, c) || (!m.in_flight && m.data_q.empty())) continue;
      target = &m;
      o = next_outgoing(m, c, t, true);
      rr_next_ = (rr_next_ + i + 1) % n;
      break;
    }
  }
  if (!target && cfg_.poll_interval > 0) {
    for (std::size_t i = 0; i < n; ++i) {
      Link& m = members_[(rr_next_ + i) % n];
      if (!reachable(m, c) || slot - m.last_tx_slot < cfg_.poll_interval) continue;
      target = &m;
      rr_next_ = (rr_next_ + i + 1) % n;
      break;
    }
  }
  if (!target) return;
  send_connection_packet(t, *target, std::move(o), c, slot);
}

void Device::on_master_frame(const ParseResult& r, std::int64_t t) {
  const Packet& p = r.packet;
  if (!awaiting_reply_from_ || !p.header || p.header->am_addr != *awaiting_reply_from_) return;
  Link* l = member_by_am(*awaiting_reply_from_);
  if (!l) return;
  awaiting_reply_from_.reset();
  busy_until_ = std::max(busy_until_, t);
  l->first_unanswered_slot = -1;
  process_ack(*l, p.header->arqn, t);
  if (r.ok()) {
    handle_payload(*l, p, t, true);
  } else {
    l->arqn_out = false;
  }
  if (l->new_conn && r.ok()) {
    l->new_conn = false;
    emit(t, EventType::PageComplete, double(t - l->page_start) / double(kSlot), l->addr.to_string());
    emit(t, EventType::Connected, double(l->am), l->addr.to_string());
    if (!page_queue_.empty()) {
      const BdAddr next = page_queue_.front();
      page_queue_.pop_front();
      start_page(next, t);
    }
  }
  sweep_members();
}

// ---------------------------------------------------------------------------
// Connection: slave

void Device::send_slave_reply(std::int64_t t) {
  const std::uint32_t c = clk(t);
  Link& l = slave_link_;
  const AccessCode ac = AccessCode::channel(*master_);
  const auto o = next_outgoing(l, c, t, false);
  const Packet p = o ? data_packet(l, *o, am_addr_, ac)
                     : Packet{PacketKind::Null, ac, PacketHeader{am_addr_, true, l.arqn_out, l.seqn_out}, 2, {}};
  schedule_tx(t, connection_channel(master_->address_key(), c), p, master_->uap, kTagSlaveReply);
}

void Device::tick_slave(std::int64_t t) {
  if (slave_reply_at_ >= 0 && t >= slave_reply_at_) {
    slave_reply_at_ = -1;
    if (!tx_) send_slave_reply(t);
  }
  if (state_ == DeviceState::Park) return;
  if (slave_link_.new_conn && t >= slave_link_.new_conn_deadline) {
    emit(t, EventType::LinkLost, 0.0, "new connection timeout");
    reset_context();
    enter_page_scan(t);
    return;
  }
  const std::int64_t u = pico_us(t);
  const std::int64_t off = floor_mod(u, kSlot);
  const std::uint32_t c = clk_at(u);
  const std::uint32_t key = master_->address_key();

  if (state_ == DeviceState::Hold) {
    if (!resyncing_) {
      if (t < hold_until_t_ - cfg_.hold_resync_guard_us) return;
      resyncing_ = true;
      resync_deadline_ = std::max(hold_until_t_, t) + cfg_.timeouts.supervision_timeout * kSlot;
      emit(t, EventType::Resync);
      set_rx(RxMode::Continuous, connection_channel(key, c));
      return;
    }
    if (t >= resync_deadline_) {
      emit(t, EventType::LinkLost, 0.0, "hold resync failed");
      reset_context();
      set_state(DeviceState::Standby, t);
      return;
    }
    if (off == 0 && !rx_.collecting()) set_rx(RxMode::Continuous, connection_channel(key, c));
    return;
  }

  if (off != 0 || (c & 2) != 0 || tx_ || rx_.collecting() || slave_reply_at_ >= 0) return;
  const bool sniff = state_ == DeviceState::Sniff;
  if (sniff && !sniff_window_open(timers_, c)) return;
  const int len = sniff ? cfg_.sniff_listen_us : cfg_.listen_window_us;
  set_rx(RxMode::Window, connection_channel(key, c), t + len);
}

void Device::on_slave_frame(const ParseResult& r, std::int64_t t) {
  const Packet& p = r.packet;
  if (!p.header) return;
  const std::uint8_t am = p.header->am_addr;
  if (am != 0 && am != am_addr_) return;
  Link& l = slave_link_;
  if (l.new_conn && r.ok()) {
    l.new_conn = false;
    emit(t, EventType::Connected, double(am_addr_), master_->to_string());
  }
  if (am == 0) {
    if (r.ok()) handle_payload(l, p, t, false);
    return;
  }
  process_ack(l, p.header->arqn, t);
  if (r.ok()) {
    handle_payload(l, p, t, false);
  } else {
    l.arqn_out = false;
  }
  if (state_ == DeviceState::Standby) return;  // detached by the master
  const std::int64_t u = pico_us(t);
  const std::int64_t next = floor_div(u + kSlot - 1, kSlot) * kSlot;
  slave_reply_at_ = t + (next - u);
}

// ---------------------------------------------------------------------------
// Commands

void Device::command(const Command& cmd, std::int64_t t) {
  now_ = t;
  auto reject = [&](const std::string& why) {
    throw CommandRejected(std::string(to_string(cmd.type)) + " rejected in " + to_string(state_) + ": " + why);
  };
  const bool master_connected = state_ == DeviceState::ConnectionActive && role_ == Role::Master;
  switch (cmd.type) {
    case CommandType::EnableInquiry:
      if (state_ != DeviceState::Standby && !master_connected) reject("requires Standby");
      start_inquiry(t);
      break;
    case CommandType::EnableInquiryScan:
      if (state_ != DeviceState::Standby) reject("requires Standby");
      start_inquiry_scan(t);
      break;
    case CommandType::EnablePage:
      if (!cmd.target) reject("missing target address");
      if (state_ == DeviceState::Page || state_ == DeviceState::MasterResponse) {
        page_queue_.push_back(*cmd.target);
        break;
      }
      if (state_ != DeviceState::Standby && !master_connected) reject("requires Standby");
      if (members_.size() >= 7) reject("piconet already has 7 active slaves");
      start_page(*cmd.target, t);
      break;
    case CommandType::EnablePageScan:
      if (state_ != DeviceState::Standby && state_ != DeviceState::Park && state_ != DeviceState::InquiryScan)
        reject("requires Standby, InquiryScan or Park");
      if (state_ == DeviceState::Park) reset_context();
      enter_page_scan(t);
      break;
    case CommandType::EnableSniff:
    case CommandType::EnableHold:
    case CommandType::EnablePark:
    case CommandType::ExitSniff: {
      LmpPdu req;
      req.opcode = cmd.type == CommandType::EnableSniff  ? LmpOpcode::SniffReq
                   : cmd.type == CommandType::EnableHold ? LmpOpcode::HoldReq
                   : cmd.type == CommandType::EnablePark ? LmpOpcode::ParkReq
                                                         : LmpOpcode::Unsniff;
      req.interval = cmd.interval;
      req.attempt = cmd.type == CommandType::EnableSniff ? cmd.attempt : 0;
      const LinkMode needed = cmd.type == CommandType::ExitSniff ? LinkMode::Sniff : LinkMode::Active;
      Link* l = nullptr;
      if (master_connected) {
        if (cmd.target) l = member_by_addr(*cmd.target);
        else if (members_.size() == 1) l = &members_.front();
        if (!l) reject("no such piconet member");
        if (l->mode != needed) reject(std::string("member is in ") + to_string(l->mode));
      } else if (role_ == Role::Slave &&
                 (state_ == DeviceState::ConnectionActive || state_ == DeviceState::Sniff)) {
        l = &slave_link_;
        if (timers_.mode != needed) reject(std::string("link is in ") + to_string(timers_.mode));
      } else {
        reject("requires an active connection");
      }
      if (l->pending_request) reject("negotiation already in progress");
      l->lmp_q.push_back(Outgoing{PacketKind::Dm1, kLlidLmp, encode(req), true, std::nullopt});
      l->pending_request = req;
      if (cmd.type == CommandType::EnableHold) {
        l->hold_repeat = cmd.repeat;
        l->hold_interval = cmd.interval;
      }
      break;
    }
    case CommandType::DetachReset:
      reset_context();
      set_state(DeviceState::Standby, t);
      break;
  }
}

}  // namespace btsim
