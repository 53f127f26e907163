#include "snow/call.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <variant>

namespace snow {

namespace {

std::string format_media_lines(const std::vector<MediaLine>& lines) {
    std::string out = "[";
    bool first = true;
    for (const auto& l : lines) {
        if (!first) out += ",";
        out += std::string(to_string(l.kind)) + ":" + l.track.value + "@" + l.origin.value;
        first = false;
    }
    return out + "]";
}

std::string format_attrs(const std::map<std::string, std::string>& attrs) {
    std::string out = "{";
    bool first = true;
    for (const auto& [k, v] : attrs) {
        if (!first) out += ";";
        out += k;
        if (!v.empty()) out += "=" + v;
        first = false;
    }
    return out + "}";
}

}  // namespace

struct CallRuntime::Impl {
    // ----- construction ---------------------------------------------------

    Impl(SimEngine& engine, Network& network, InSimBus& bus, CallPlan plan_in, Config config)
        : engine(engine), network(network), bus(bus), plan(std::move(plan_in)), cfg(std::move(config)) {
        plan.validate();
        room = RoomId{plan.call_id.value};
        all_parties.push_back(plan.initiator);
        for (const auto& p : plan.others) all_parties.push_back(p);
        for (const auto& p : all_parties) {
            if (!network.has_peer(p)) {
                throw std::invalid_argument("no network profile for peer " + p.value);
            }
        }
        drop_after_ms = 2.0 * cfg.media.frame_interval_ms();
    }

    // ----- small value types ---------------------------------------------

    enum class SenderMode { raw, paced };

    struct TrackSender {
        ConnectionId conn;
        PeerId from;
        PeerId to;
        StreamId source_stream;
        TrackId track;
        TrackKind kind = TrackKind::video;
        SenderMode mode = SenderMode::raw;
        bool active = false;
        bool stopped = false;
        std::uint64_t next_rtp_seq = 0;
        std::uint64_t next_frame_seq = 0;
        std::uint64_t packets_sent = 0;
        std::uint64_t network_dropped = 0;
        std::uint64_t dropped_frames = 0;  // shed by the sender-side staleness rule
    };

    struct FrameAssembly {
        int expected = 0;
        int emitted = 0;
        SimTime last_arrival = 0;
        MediaPacket sample;  // metadata shared by the frame's packets
    };

    struct Pipeline {
        PeerId receiver;
        ConnectionId conn;
        TrackId track;
        TrackKind kind = TrackKind::video;
        PeerId origin;
        StreamId view_stream;
        std::unique_ptr<JitterBuffer> jb;
        InboundTrackStats stats;
        std::vector<StatsSample> samples;
        std::map<std::uint64_t, FrameAssembly> assembling;
        std::optional<SimTime> prev_frame_arrival;
        std::optional<SimTime> prev_frame_capture;
        std::shared_ptr<const std::vector<PeerId>> last_render_composition;
        bool first_arrival_seen = false;
        bool closed = false;
    };

    struct LatestFrame {
        std::optional<FrameInfo> video;
        std::optional<FrameInfo> audio;
        const std::optional<FrameInfo>& of(TrackKind k) const {
            return k == TrackKind::video ? video : audio;
        }
        std::optional<FrameInfo>& of(TrackKind k) { return k == TrackKind::video ? video : audio; }
    };

    struct Attachment {
        PeerId sender;
        StreamId stream;
        std::vector<std::size_t> sender_indices;  // into `senders`
    };

    struct Connection {
        ConnectionInfo info;
        PeerId caller;
        PeerId callee;
        std::vector<Attachment> caller_attachments;
        std::vector<Attachment> callee_attachments;
        bool no_return_media = false;
    };

    struct PeerState {
        PeerId id;
        std::unique_ptr<CpuScheduler> cpu;
        StreamId local_stream;
        std::set<PeerId> expected_callers;    // armed by x-snow-expect-call
        std::optional<SimTime> gather_ready;  // candidate gathering, cached per call
        bool left = false;
    };

    struct MergeRuntime {
        MergeId id;
        PeerId owner;
        bool stopped = false;
    };

    // ----- members ---------------------------------------------------------

    SimEngine& engine;
    Network& network;
    InSimBus& bus;
    CallPlan plan;
    Config cfg;
    RoomId room;
    std::vector<PeerId> all_parties;
    double drop_after_ms;

    Trace trace;
    StreamTable streams;
    std::map<PeerId, PeerState> peers;
    std::map<ConnectionId, Connection> conns;
    std::vector<std::unique_ptr<TrackSender>> senders;
    std::map<std::pair<ConnectionId, TrackId>, std::unique_ptr<Pipeline>> pipelines;
    std::map<StreamId, LatestFrame> latest_frames;
    std::vector<Obligation> obligations;
    std::vector<MergeRuntime> merge_runtimes;

    std::map<std::pair<ConnectionId, TrackId>, bool> expected_flows;
    int missing_flows = 0;

    SimTime first_offer_ts = -1;
    std::optional<SimTime> all_media_flowing_ts;
    bool started = false;
    bool aborted = false;
    bool torn_down = false;
    std::string abort_reason;
    bool sampler_running = false;

    struct MediaTraceRow {
        SimTime t;
        PeerId peer;
        TrackId track;
        const char* event;
        std::uint64_t rtp_seq;
        double residency_ms;
    };
    std::vector<MediaTraceRow> media_trace;

    void trace_media(const PeerId& peer, const TrackId& track, const char* event,
                     std::uint64_t seq, double residency_ms = 0) {
        if (!cfg.record_media_trace) return;
        media_trace.push_back(MediaTraceRow{engine.now(), peer, track, event, seq, residency_ms});
    }

    MergeId mcu_merge, mcutwo_merge1, mcutwo_merge2, mcumulti_merge;

    // ----- tracing helpers --------------------------------------------------

    void trace_msg(const PeerId& from, const PeerId& to, const std::string& kind,
                   const std::string& detail) {
        if (cfg.record_trace) trace.add(engine.now(), from, to, kind, detail);
    }
    void trace_action(const PeerId& actor, const std::string& detail) {
        if (cfg.record_trace) trace.add(engine.now(), actor, actor, "media-action", detail);
    }

    void abort_call(const std::string& reason) {
        if (aborted) return;
        aborted = true;
        abort_reason = reason;
        trace_action(plan.initiator, "abort reason=" + reason);
        for (auto& [id, c] : conns) close_connection(c);
    }

    // ----- setup -----------------------------------------------------------

    void add_peer_state(const PeerId& p) {
        if (peers.count(p)) return;
        PeerState st;
        st.id = p;
        st.cpu = std::make_unique<CpuScheduler>(engine, p, network.profile(p).cpu_capacity,
                                                drop_after_ms);
        st.local_stream = StreamId{"local-" + p.value};
        MediaStream& local = streams.create_local_stream(p, st.local_stream);
        local.add_track(Track{TrackId{p.value + "-v"}, TrackKind::video, p, p.value + " camera"});
        local.add_track(Track{TrackId{p.value + "-a"}, TrackKind::audio, p, p.value + " mic"});
        peers.emplace(p, std::move(st));
        bus.register_peer(room, p, [this, p](const SignalMessage& msg) { on_signal(p, msg); });
        start_capture(p);
    }

    void start_capture(const PeerId& p) {
        // Local capture clocks run for the whole call; CPU is charged per
        // encode (per attached connection), not for capture itself.
        schedule_capture_tick(p, TrackKind::video, cfg.media.frame_interval_ms());
        schedule_capture_tick(p, TrackKind::audio, cfg.media.audio_interval_ms());
    }

    void schedule_capture_tick(const PeerId& p, TrackKind kind, double interval) {
        engine.schedule_after(interval, [this, p, kind, interval] {
            auto it = peers.find(p);
            if (it == peers.end() || it->second.left || torn_down) return;
            capture_tick(it->second, kind);
            schedule_capture_tick(p, kind, interval);
        });
    }

    void capture_tick(PeerState& peer, TrackKind kind) {
        const MediaStream& local = streams.get(peer.local_stream);
        const Track* track = local.find_track(kind, peer.id);
        if (!track) return;
        auto& latest = latest_frames[peer.local_stream].of(kind);
        FrameInfo f;
        f.track = track->id;
        f.frame_seq = latest ? latest->frame_seq + 1 : 0;
        f.capture_ts = engine.now();
        f.origin_capture_ts = engine.now();
        f.size_bytes = kind == TrackKind::video ? cfg.media.video_frame_bytes
                                                : cfg.media.audio_packet_bytes;
        f.composition = std::make_shared<const std::vector<PeerId>>(std::vector<PeerId>{peer.id});
        latest = f;
        for (auto& s : senders) {
            if (s->active && !s->stopped && s->mode == SenderMode::raw &&
                s->source_stream == peer.local_stream && s->kind == kind) {
                emit_frame(*s, *latest);
            }
        }
    }

    // ----- merges ------------------------------------------------------------

    MergedStream& create_merge(const PeerId& owner) {
        MergedStream& m = streams.merge_create(owner, cfg.media.video_fps, engine.now());
        if (cfg.audio_excludes_self) m.audio_excludes_self = true;
        merge_runtimes.push_back(MergeRuntime{m.merge_id, owner, false});
        trace_action(owner, "merge-create id=" + m.merge_id.value + " out=" + m.out_stream.value);
        schedule_compose_tick(m.merge_id, TrackKind::video, 1000.0 / m.output_fps);
        schedule_compose_tick(m.merge_id, TrackKind::audio, cfg.media.audio_interval_ms());
        return m;
    }

    MergeRuntime* merge_runtime(const MergeId& id) {
        for (auto& mr : merge_runtimes) {
            if (mr.id == id) return &mr;
        }
        return nullptr;
    }

    void schedule_compose_tick(const MergeId& id, TrackKind kind, double interval) {
        engine.schedule_after(interval, [this, id, kind, interval] {
            if (torn_down) return;
            MergeRuntime* mr = merge_runtime(id);
            if (!mr || mr->stopped) return;
            compose_tick(id, kind);
            schedule_compose_tick(id, kind, interval);
        });
    }

    void compose_tick(const MergeId& id, TrackKind kind) {
        MergedStream& m = streams.merge(id);
        auto owner_it = peers.find(m.owner);
        if (owner_it == peers.end() || owner_it->second.left) return;
        const auto& sources = kind == TrackKind::video ? m.video_sources : m.audio_sources;

        double work = kind == TrackKind::video
                          ? cfg.media.cost_compose_per_source *
                                static_cast<double>(std::max<std::size_t>(sources.size(), 1))
                          : cfg.media.cost_audio *
                                static_cast<double>(std::max<std::size_t>(sources.size(), 1));
        SimTime tick_ts = engine.now();
        owner_it->second.cpu->submit_send(
            CpuWork::compose, work, tick_ts,
            [this, id, kind, tick_ts](SimTime) { finish_compose(id, kind, tick_ts); });
    }

    void finish_compose(const MergeId& id, TrackKind kind, SimTime tick_ts) {
        if (torn_down) return;
        MergedStream& m = streams.merge(id);
        const auto& sources = kind == TrackKind::video ? m.video_sources : m.audio_sources;
        const MediaStream& out = streams.get(m.out_stream);
        const Track* out_track = out.find_track(kind, m.owner);
        if (!out_track) return;

        std::vector<PeerId> composition;
        SimTime origin_capture = tick_ts;
        bool any = false;
        for (const auto& src : sources) {
            auto lf = latest_frames.find(src.stream);
            if (lf == latest_frames.end()) continue;
            const auto& frame = lf->second.of(kind);
            if (!frame) continue;
            for (const PeerId& o : *frame->composition) {
                if (std::find(composition.begin(), composition.end(), o) == composition.end()) {
                    composition.push_back(o);
                }
            }
            if (!any || frame->origin_capture_ts < origin_capture) {
                origin_capture = frame->origin_capture_ts;
            }
            any = true;
        }
        std::sort(composition.begin(), composition.end());

        auto& latest = latest_frames[m.out_stream].of(kind);
        FrameInfo f;
        f.track = out_track->id;
        f.frame_seq = latest ? latest->frame_seq + 1 : 0;
        f.capture_ts = tick_ts;
        f.origin_capture_ts = any ? origin_capture : tick_ts;
        f.size_bytes = kind == TrackKind::video
                           ? cfg.media.composed_frame_bytes(m.video_sources.size())
                           : cfg.media.audio_packet_bytes;
        f.composition = std::make_shared<const std::vector<PeerId>>(std::move(composition));
        latest = f;
    }

    void merge_add_traced(const MergeId& id, const StreamId& source) {
        MergedStream& m = streams.merge(id);
        streams.merge_add(m, streams.get(source), engine.now());
        trace_action(m.owner, "merge-add id=" + id.value + " stream=" + source.value +
                                  " sources=" + std::to_string(m.video_sources.size()));
    }

    // ----- senders ------------------------------------------------------------

    std::size_t make_sender(const ConnectionId& conn, const PeerId& from, const PeerId& to,
                            const StreamId& source, const Track& track, SenderMode mode) {
        auto s = std::make_unique<TrackSender>();
        s->conn = conn;
        s->from = from;
        s->to = to;
        s->source_stream = source;
        s->track = track.id;
        s->kind = track.kind;
        s->mode = mode;
        senders.push_back(std::move(s));
        return senders.size() - 1;
    }

    void activate_senders(Connection& c, bool caller_side) {
        auto& atts = caller_side ? c.caller_attachments : c.callee_attachments;
        for (auto& att : atts) {
            for (std::size_t idx : att.sender_indices) {
                TrackSender& s = *senders[idx];
                if (s.active || s.stopped) continue;
                s.active = true;
                if (s.mode == SenderMode::paced) {
                    double interval = s.kind == TrackKind::video ? cfg.media.frame_interval_ms()
                                                                 : cfg.media.audio_interval_ms();
                    schedule_paced_tick(idx, interval);
                }
            }
        }
    }

    void schedule_paced_tick(std::size_t idx, double interval) {
        engine.schedule_after(interval, [this, idx, interval] {
            TrackSender& s = *senders[idx];
            if (!s.active || s.stopped || torn_down) return;
            auto lf = latest_frames.find(s.source_stream);
            if (lf != latest_frames.end()) {
                const auto& frame = lf->second.of(s.kind);
                // Re-paced on this sender's clock; a stale source frame is
                // re-sent so the outgoing cadence holds.
                if (frame) emit_frame(s, *frame);
            }
            schedule_paced_tick(idx, interval);
        });
    }

    void emit_frame(TrackSender& s, const FrameInfo& source_frame) {
        auto peer_it = peers.find(s.from);
        if (peer_it == peers.end() || peer_it->second.left) return;
        auto conn_it = conns.find(s.conn);
        if (conn_it == conns.end() || conn_it->second.info.phase != ConnPhase::connected) return;

        SimTime capture_ts = engine.now();
        std::size_t n_sources = source_frame.composition ? source_frame.composition->size() : 1;
        double work = s.kind == TrackKind::video
                          ? cfg.media.video_encode_cost(std::max<std::size_t>(n_sources, 1))
                          : cfg.media.cost_audio;

        std::uint64_t frame_seq = s.next_frame_seq++;
        TrackSender* sp = &s;
        FrameInfo frame = source_frame;
        peer_it->second.cpu->submit_send(
            CpuWork::encode, work, capture_ts,
            [this, sp, frame, capture_ts, frame_seq](SimTime) {
                send_packets(*sp, frame, capture_ts, frame_seq);
            },
            [sp] { sp->dropped_frames++; });
    }

    std::uint64_t next_burst_id = 1;

    void send_packets(TrackSender& s, const FrameInfo& frame, SimTime capture_ts,
                      std::uint64_t frame_seq) {
        if (s.stopped || torn_down) return;
        std::uint64_t burst = next_burst_id++;
        auto comp = frame.composition;
        if (s.kind == TrackKind::audio) {
            const MergedStream* m = streams.merge_of_stream(s.source_stream);
            if (m && m->audio_excludes_self && comp) {
                // Per-consumer audio mix: the listener's own audio is left out.
                auto filtered = std::make_shared<std::vector<PeerId>>();
                for (const PeerId& o : *comp) {
                    if (!(o == s.to)) filtered->push_back(o);
                }
                comp = std::shared_ptr<const std::vector<PeerId>>(std::move(filtered));
            }
        }

        std::size_t frame_bytes = frame.size_bytes;
        int n = s.kind == TrackKind::video ? cfg.media.packets_for(frame_bytes) : 1;
        for (int i = 0; i < n; ++i) {
            MediaPacket pkt;
            pkt.track = s.track;
            pkt.rtp_seq = s.next_rtp_seq++;
            pkt.frame_seq = frame_seq;
            pkt.packet_index = i;
            pkt.packets_in_frame = n;
            pkt.capture_ts = capture_ts;
            pkt.origin_capture_ts = frame.origin_capture_ts;
            pkt.size_bytes = i + 1 < n
                                 ? cfg.media.packet_bytes
                                 : frame_bytes - static_cast<std::size_t>(n - 1) * cfg.media.packet_bytes;
            pkt.composition = comp;
            s.packets_sent++;
            trace_media(s.from, s.track, "sent", pkt.rtp_seq);

            auto key = std::make_pair(s.conn, s.track);
            network.send_media(
                s.from, s.to, pkt.size_bytes, [this, key, pkt] { on_media_packet(key, pkt); },
                [sp = &s] { sp->network_dropped++; }, burst);
        }
    }

    // ----- receive path ---------------------------------------------------------

    void create_pipelines_for_lines(const PeerId& receiver, const ConnectionId& conn,
                                    const std::vector<MediaLine>& lines, const PeerId& sender) {
        // One remote view stream per distinct origin in the description.
        std::map<PeerId, std::vector<MediaLine>> by_origin;
        for (const auto& l : lines) by_origin[l.origin].push_back(l);

        for (const auto& [origin, origin_lines] : by_origin) {
            StreamId view{"rv-" + receiver.value + "-" + conn.str() + "-" + origin.value};
            if (!streams.has(view)) {
                StreamId sender_stream =
                    source_stream_for_track(conn, sender, origin_lines.front().track);
                streams.create_remote_view(view, conn, sender_stream,
                                           network.mean_path_latency_ms(sender, receiver));
            }
            MediaStream& vs = streams.get(view);
            for (const auto& l : origin_lines) {
                if (!vs.find_track(l.kind, l.origin)) {
                    vs.add_track(Track{l.track, l.kind, l.origin, "remote"});
                }
                if (pipelines.count({conn, l.track})) continue;
                auto p = std::make_unique<Pipeline>();
                p->receiver = receiver;
                p->conn = conn;
                p->track = l.track;
                p->kind = l.kind;
                p->origin = l.origin;
                p->view_stream = view;
                p->jb = std::make_unique<JitterBuffer>(engine);
                p->stats.receiver = receiver;
                p->stats.track = l.track;
                p->stats.video = l.kind == TrackKind::video;
                Pipeline* raw = p.get();
                p->jb->set_emit([this, raw](const MediaPacket& pkt, SimTime arrival, SimTime playout) {
                    trace_media(raw->receiver, raw->track, "played", pkt.rtp_seq, playout - arrival);
                    on_jb_emit(*raw, pkt, arrival, playout);
                });
                p->jb->set_loss([this, raw](std::uint64_t seq) {
                    raw->stats.packets_lost++;
                    trace_media(raw->receiver, raw->track, "lost", seq);
                });
                pipelines.emplace(std::make_pair(conn, l.track), std::move(p));
                register_expected_flow(conn, l.track);
            }
        }
    }

    StreamId source_stream_for_track(const ConnectionId& conn, const PeerId& sender,
                                     const TrackId& track) const {
        auto it = conns.find(conn);
        if (it != conns.end()) {
            const auto& atts = it->second.caller == sender ? it->second.caller_attachments
                                                           : it->second.callee_attachments;
            for (const auto& att : atts) {
                const MediaStream& s = streams.get(att.stream);
                for (const Track& t : s.tracks) {
                    if (t.id == track) return att.stream;
                }
            }
        }
        return StreamId{};
    }

    void register_expected_flow(const ConnectionId& conn, const TrackId& track) {
        auto key = std::make_pair(conn, track);
        if (expected_flows.count(key)) return;
        expected_flows[key] = false;
        missing_flows++;
    }

    void on_media_packet(const std::pair<ConnectionId, TrackId>& key, const MediaPacket& pkt) {
        auto it = pipelines.find(key);
        if (it == pipelines.end() || it->second->closed) return;
        Pipeline& p = *it->second;
        p.stats.packets_received++;
        trace_media(p.receiver, p.track, "recv", pkt.rtp_seq);
        if (!p.first_arrival_seen) {
            p.first_arrival_seen = true;
            mark_flow_seen(key);
        }
        p.jb->on_packet(pkt, engine.now());
    }

    void mark_flow_seen(const std::pair<ConnectionId, TrackId>& key) {
        auto it = expected_flows.find(key);
        if (it == expected_flows.end() || it->second) return;
        it->second = true;
        if (--missing_flows == 0 && !all_media_flowing_ts) {
            all_media_flowing_ts = engine.now();
            trace_action(plan.initiator, "all-media-flowing");
        }
    }

    void on_jb_emit(Pipeline& p, const MediaPacket& pkt, SimTime arrival, SimTime /*playout*/) {
        p.stats.jitter_buffer_delay_s = p.jb->cumulative_buffer_delay_s();
        p.stats.jb_emitted = p.jb->emitted_count();

        FrameAssembly& fa = p.assembling[pkt.frame_seq];
        fa.expected = pkt.packets_in_frame;
        fa.emitted++;
        if (arrival > fa.last_arrival) fa.last_arrival = arrival;
        if (fa.emitted == 1) fa.sample = pkt;
        if (fa.emitted < fa.expected) return;

        // Frame complete: update interarrival jitter on frame granularity.
        if (p.prev_frame_arrival) {
            p.stats.jitter_ms = jitter_update(p.stats.jitter_ms, *p.prev_frame_arrival,
                                              *p.prev_frame_capture, fa.last_arrival, pkt.capture_ts);
        }
        p.prev_frame_arrival = fa.last_arrival;
        p.prev_frame_capture = pkt.capture_ts;

        MediaPacket frame_meta = fa.sample;
        p.assembling.erase(pkt.frame_seq);
        while (!p.assembling.empty() && p.assembling.begin()->first + 64 < pkt.frame_seq) {
            p.assembling.erase(p.assembling.begin());  // ruined frames, pruned lazily
        }

        auto peer_it = peers.find(p.receiver);
        if (peer_it == peers.end() || peer_it->second.left) return;
        double work = p.kind == TrackKind::video ? cfg.media.cost_video_decode : cfg.media.cost_audio;
        Pipeline* raw = &p;
        peer_it->second.cpu->submit_receive(CpuWork::decode, work, [this, raw, frame_meta](SimTime t) {
            render_frame(*raw, frame_meta, t);
        });
    }

    void render_frame(Pipeline& p, const MediaPacket& frame_meta, SimTime now) {
        if (p.closed) return;
        p.stats.frames_rendered++;
        if (p.stats.last_render_ts) {
            p.stats.total_inter_frame_delay_s += (now - *p.stats.last_render_ts) / 1000.0;
        }
        p.stats.last_render_ts = now;
        p.stats.capture_to_render_s += (now - frame_meta.origin_capture_ts) / 1000.0;
        p.last_render_composition = frame_meta.composition;

        // The rendered frame becomes the latest frame of the local view, so
        // re-shares and merges pick it up.
        auto& latest = latest_frames[p.view_stream].of(p.kind);
        FrameInfo f;
        f.track = p.track;
        f.frame_seq = latest ? latest->frame_seq + 1 : 0;
        f.capture_ts = now;
        f.origin_capture_ts = frame_meta.origin_capture_ts;
        f.size_bytes = p.kind == TrackKind::video ? cfg.media.video_frame_bytes
                                                  : cfg.media.audio_packet_bytes;
        f.composition = frame_meta.composition;
        latest = f;
    }

    // ----- per-second sampling -------------------------------------------------

    void start_sampler() {
        if (sampler_running) return;
        sampler_running = true;
        schedule_sampler();
    }

    void schedule_sampler() {
        engine.schedule_after(1000.0, [this] {
            if (torn_down) return;
            for (auto& [key, p] : pipelines) {
                if (p->closed) continue;
                StatsSample s;
                s.t_ms = engine.now();
                s.packets_lost = p->stats.packets_lost;
                s.jitter_ms = p->stats.jitter_ms;
                s.jitter_buffer_delay_s = p->stats.jitter_buffer_delay_s;
                s.jb_emitted = p->stats.jb_emitted;
                s.total_inter_frame_delay_s = p->stats.total_inter_frame_delay_s;
                s.frames_rendered = p->stats.frames_rendered;
                s.capture_to_render_s = p->stats.capture_to_render_s;
                p->samples.push_back(s);
                p->jb->set_target_delay_ms(adapt_target_delay(p->stats.jitter_ms));
            }
            schedule_sampler();
        });
    }

    // ----- signaling / establishment ---------------------------------------------

    void start() {
        if (started) return;
        started = true;
        for (const auto& p : all_parties) add_peer_state(p);
        start_sampler();
        engine.schedule_after(cfg.start_delay_ms, [this] { begin_procedure(); });
    }

    void begin_procedure() {
        switch (plan.model) {
            case TopologyModel::MESH:
            case TopologyModel::SFU:
            case TopologyModel::MCU:
                open_connection(plan.initiator, second_party(),
                                {peers.at(plan.initiator).local_stream}, {}, false);
                break;
            case TopologyModel::MCUTWO: begin_mcutwo(); break;
            case TopologyModel::MCUMULTI: begin_mcumulti(); break;
        }
    }

    void begin_mcutwo() {
        // Step 0: both merges exist and carry the initiator's tracks before
        // any offer goes out.
        MergedStream& m1 = create_merge(plan.initiator);
        MergedStream& m2 = create_merge(plan.initiator);
        mcutwo_merge1 = m1.merge_id;
        mcutwo_merge2 = m2.merge_id;
        merge_add_traced(m1.merge_id, peers.at(plan.initiator).local_stream);
        merge_add_traced(m2.merge_id, peers.at(plan.initiator).local_stream);

        open_connection(plan.initiator, second_party(), {m1.out_stream}, {}, false);
        engine.schedule_after(cfg.offer_stagger_ms, [this] {
            if (aborted) return;
            open_connection(plan.initiator, third_party(), {streams.merge(mcutwo_merge2).out_stream},
                            {}, false);
        });
    }

    void begin_mcumulti() {
        MergedStream& m = create_merge(plan.initiator);
        mcumulti_merge = m.merge_id;
        merge_add_traced(m.merge_id, peers.at(plan.initiator).local_stream);
        double stagger = 0;
        for (const PeerId& p : plan.others) {
            engine.schedule_after(stagger, [this, p] {
                if (aborted) return;
                open_connection(plan.initiator, p, {streams.merge(mcumulti_merge).out_stream}, {},
                                false);
            });
            stagger += cfg.offer_stagger_ms;
        }
    }

    // -- connection plumbing --

    Connection& open_connection(const PeerId& caller, const PeerId& callee,
                                const std::vector<StreamId>& attach,
                                std::map<std::string, std::string> attrs, bool no_return_media) {
        int seq = 0;
        for (const auto& [id, c] : conns) {
            if (id.caller == caller && id.callee == callee) seq = std::max(seq, id.seq + 1);
        }
        ConnectionId id{caller, callee, seq};
        Connection c;
        c.info.id = id;
        c.caller = caller;
        c.callee = callee;
        c.no_return_media = no_return_media;
        auto [it, _] = conns.emplace(id, std::move(c));
        send_offer(it->second, attach, std::move(attrs));
        return it->second;
    }

    void send_offer(Connection& c, const std::vector<StreamId>& attach,
                    std::map<std::string, std::string> attrs) {
        attrs[kAttrModel] = to_string(plan.model);
        if (c.no_return_media) attrs[kAttrNoReturnMedia] = "";
        SessionDescription sdp;
        sdp.kind = SdpKind::offer;
        sdp.from = c.caller;
        sdp.to = c.callee;
        sdp.attributes = std::move(attrs);
        for (const StreamId& sid : attach) {
            attach_stream(c, c.caller, sid);
            const MediaStream& s = streams.get(sid);
            for (const Track& t : s.tracks) {
                sdp.media_lines.push_back(MediaLine{t.kind, t.id, t.origin});
            }
        }
        c.info.phase = ConnPhase::offered;
        c.info.offered_ts = engine.now();
        if (first_offer_ts < 0) first_offer_ts = engine.now();
        ensure_gathering(peers.at(c.caller));  // gathering starts with the local description

        SignalMessage msg;
        msg.kind = SignalKind::offer;
        msg.room = room;
        msg.from = c.caller;
        msg.to = c.callee;
        msg.payload = sdp;
        trace_msg(c.caller, c.callee, "offer",
                  "conn=" + c.info.id.str() + " media=" + format_media_lines(sdp.media_lines) +
                      " attrs=" + format_attrs(sdp.attributes));
        bus.send(std::move(msg));
    }

    void attach_stream(Connection& c, const PeerId& side, const StreamId& sid) {
        auto& atts = side == c.caller ? c.caller_attachments : c.callee_attachments;
        for (const auto& a : atts) {
            if (a.stream == sid) return;
        }
        Attachment att;
        att.sender = side;
        att.stream = sid;
        const MediaStream& s = streams.get(sid);
        PeerId other = side == c.caller ? c.callee : c.caller;
        bool local_raw = std::holds_alternative<LocalProvenance>(s.provenance);
        for (const Track& t : s.tracks) {
            SenderMode mode = local_raw ? SenderMode::raw : SenderMode::paced;
            att.sender_indices.push_back(make_sender(c.info.id, side, other, sid, t, mode));
        }
        trace_action(side, "attach conn=" + c.info.id.str() + " stream=" + sid.value);
        atts.push_back(std::move(att));
        if (c.info.phase == ConnPhase::connected) activate_senders(c, side == c.caller);
    }

    void send_answer(Connection& c, const std::vector<StreamId>& attach) {
        SessionDescription sdp;
        sdp.kind = SdpKind::answer;
        sdp.from = c.callee;
        sdp.to = c.caller;
        for (const StreamId& sid : attach) {
            attach_stream(c, c.callee, sid);
            const MediaStream& s = streams.get(sid);
            for (const Track& t : s.tracks) {
                sdp.media_lines.push_back(MediaLine{t.kind, t.id, t.origin});
            }
        }
        SignalMessage msg;
        msg.kind = SignalKind::answer;
        msg.room = room;
        msg.from = c.callee;
        msg.to = c.caller;
        msg.payload = sdp;
        trace_msg(c.callee, c.caller, "answer",
                  "conn=" + c.info.id.str() + " media=" + format_media_lines(sdp.media_lines));
        bus.send(std::move(msg));
    }

    // -- ICE --

    SimTime ensure_gathering(PeerState& peer) {
        if (!peer.gather_ready) {
            auto& rng = network.named_rng("ice:gather:" + peer.id.value);
            double delay = rng.uniform(kGatherDelayMinMs, kGatherDelayMaxMs);
            peer.gather_ready = engine.now() + delay;
        }
        return *peer.gather_ready;
    }

    void send_candidates(Connection& c, const PeerId& from) {
        PeerState& st = peers.at(from);
        SimTime ready = ensure_gathering(st);
        PeerId to = from == c.caller ? c.callee : c.caller;
        bool relayed = network.route_between(c.caller, c.callee).kind == RouteKind::relayed;
        std::vector<std::string> kinds{"host", "srflx"};
        if (relayed) kinds.push_back("relay");
        ConnectionId id = c.info.id;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            SimTime at = std::max(ready, engine.now()) + 15.0 * static_cast<double>(i);
            engine.schedule_at(at, [this, id, from, to, kind = kinds[i], i] {
                auto it = conns.find(id);
                if (it == conns.end() || it->second.info.phase == ConnPhase::closed || aborted) return;
                SignalMessage msg;
                msg.kind = SignalKind::ice_candidate;
                msg.room = room;
                msg.from = from;
                msg.to = to;
                msg.payload = Candidate{kind, "sim://" + from.value + "/" + std::to_string(i)};
                trace_msg(from, to, "ice", "conn=" + id.str() + " candidate=" + kind);
                bus.send(std::move(msg));
            });
        }
    }

    void start_ice(Connection& c) {
        // Connectivity checks begin once both candidate sets exist; they take
        // k round trips on the selected route. The callee side completes
        // first, the caller confirms one transit later.
        c.info.phase = ConnPhase::ice;
        SimTime caller_ready = ensure_gathering(peers.at(c.caller));
        SimTime callee_ready = ensure_gathering(peers.at(c.callee));
        SimTime checks_start = std::max({engine.now(), caller_ready, callee_ready});

        Route route = network.route_between(c.caller, c.callee);
        int k = route.kind == RouteKind::direct ? kIceRoundTripsDirect : kIceRoundTripsRelayed;
        auto& rng = network.named_rng("ice:checks:" + c.info.id.str());
        const PeerProfile& pa = network.profile(c.caller);
        const PeerProfile& pb = network.profile(c.callee);
        double checks = 0;
        for (int i = 0; i < k; ++i) {
            checks += sample_one_way(pa, pb, network.relay(), route, rng) +
                      sample_one_way(pb, pa, network.relay(), route, rng);
        }
        SimTime callee_connected = checks_start + checks;
        SimTime caller_connected =
            callee_connected + sample_one_way(pb, pa, network.relay(), route, rng);

        ConnectionId id = c.info.id;
        engine.schedule_at(callee_connected, [this, id] { on_connected(id, false); });
        engine.schedule_at(caller_connected, [this, id] { on_connected(id, true); });
    }

    void on_connected(const ConnectionId& id, bool caller_side) {
        auto it = conns.find(id);
        if (it == conns.end()) return;
        Connection& c = it->second;
        if (c.info.phase == ConnPhase::closed || aborted) return;
        if (caller_side) {
            c.info.caller_connected_ts = engine.now();
            c.info.setup_duration_ms = engine.now() - c.info.offered_ts;
        } else {
            c.info.callee_connected_ts = engine.now();
        }
        c.info.phase = ConnPhase::connected;
        trace_action(caller_side ? c.caller : c.callee, "connected conn=" + id.str());
        activate_senders(c, caller_side);

        // Model progression runs one processing beat later, so follow-up
        // offers timestamp strictly after the connected event they gate on.
        engine.schedule_after(cfg.offer_stagger_ms, [this, id, caller_side] {
            auto it2 = conns.find(id);
            if (it2 == conns.end() || aborted || torn_down) return;
            if (it2->second.info.phase != ConnPhase::connected) return;
            if (caller_side) {
                on_caller_connected(it2->second);
            } else {
                on_callee_connected(it2->second);
            }
        });
    }

    // -- signal dispatch --

    void on_signal(const PeerId& self, const SignalMessage& msg) {
        if (torn_down) return;
        switch (msg.kind) {
            case SignalKind::offer: on_offer(self, msg); break;
            case SignalKind::answer: on_answer(self, msg); break;
            case SignalKind::ice_candidate: break;  // checks are timed in start_ice
            case SignalKind::bye: on_bye(self, msg); break;
            case SignalKind::error:
                if (!aborted) {
                    abort_call("signaling error: " + (msg.error() ? msg.error()->detail : ""));
                }
                break;
            default: break;
        }
    }

    Connection* newest_conn(const PeerId& caller, const PeerId& callee) {
        Connection* best = nullptr;
        for (auto& [id, c] : conns) {
            if (id.caller == caller && id.callee == callee) {
                if (!best || id.seq > best->info.id.seq) best = &c;
            }
        }
        return best;
    }

    void on_offer(const PeerId& self, const SignalMessage& msg) {
        const SessionDescription* sdp = msg.sdp();
        if (!sdp || aborted) return;

        // A renegotiation offer carrying the expect-call attribute arms the
        // expectation on the existing connection and is answered in place.
        if (sdp->has_attribute(kAttrExpectCall)) {
            PeerId expected{sdp->attribute(kAttrExpectCall)};
            peers.at(self).expected_callers.insert(expected);
            obligations.push_back(Obligation{kAttrExpectCall, self, expected.value, 0});
            Connection* c = newest_conn(msg.from, self);
            if (c) {
                create_pipelines_for_lines(self, c->info.id, sdp->media_lines, msg.from);
                send_answer(*c, {});
            }
            return;
        }

        Connection* c = newest_conn(msg.from, self);
        if (!c || c->info.phase != ConnPhase::offered) return;

        // Auto-accept policy: offers from the call initiator in a known room
        // are accepted; an inbound call from anyone else must have been
        // announced via x-snow-expect-call.
        if (msg.from != plan.initiator) {
            PeerState& st = peers.at(self);
            if (!st.expected_callers.count(msg.from)) {
                SignalMessage rej;
                rej.kind = SignalKind::bye;
                rej.room = room;
                rej.from = self;
                rej.to = msg.from;
                rej.payload = std::string("unexpected-offer");
                trace_msg(self, msg.from, "bye", "conn=" + c->info.id.str() + " reason=unexpected-offer");
                bus.send(std::move(rej));
                abort_call("offer from " + msg.from.value + " was not announced via " +
                           std::string(kAttrExpectCall));
                return;
            }
            discharge(kAttrExpectCall, self, msg.from.value);
        }

        create_pipelines_for_lines(self, c->info.id, sdp->media_lines, c->caller);
        c->info.phase = ConnPhase::answered;
        c->info.answered_ts = engine.now();

        if (sdp->has_attribute(kAttrCallParty)) {
            obligations.push_back(Obligation{kAttrCallParty, self, sdp->attribute(kAttrCallParty), 0});
        }
        std::vector<StreamId> attach;
        if (sdp->has_attribute(kAttrNoReturnMedia)) {
            obligations.push_back(Obligation{kAttrNoReturnMedia, self, "", 0});
            discharge(kAttrNoReturnMedia, self, "");
        } else {
            attach.push_back(peers.at(self).local_stream);
        }
        send_answer(*c, attach);
        send_candidates(*c, self);
    }

    void on_answer(const PeerId& self, const SignalMessage& msg) {
        const SessionDescription* sdp = msg.sdp();
        if (!sdp || aborted) return;
        Connection* c = newest_conn(self, msg.from);
        if (!c) return;
        if (c->info.phase != ConnPhase::answered && c->info.phase != ConnPhase::offered) {
            return;  // renegotiation answer; nothing further to do
        }
        create_pipelines_for_lines(self, c->info.id, sdp->media_lines, msg.from);
        if (c->info.answered_ts < 0) c->info.answered_ts = engine.now();
        send_candidates(*c, self);
        start_ice(*c);
        on_answer_processed(*c);
    }

    // -- model scripts --

    const PeerId& second_party() const { return plan.others.front(); }
    const PeerId& third_party() const { return plan.others.back(); }

    void on_answer_processed(Connection& c) {
        // Signaling-level establishment at the caller.
        switch (plan.model) {
            case TopologyModel::MESH:
                if (c.caller == plan.initiator && c.callee == second_party() && c.info.id.seq == 0) {
                    // Step 4: announce the third party to the second, then call
                    // the third party. Connectivity checks on conn(A,B)
                    // continue concurrently.
                    send_expect_call_update(c);
                    open_connection(plan.initiator, third_party(),
                                    {peers.at(plan.initiator).local_stream},
                                    {{kAttrCallParty, second_party().value}}, false);
                }
                break;
            case TopologyModel::MCUTWO:
                if (c.caller != plan.initiator) break;
                if (c.callee == second_party()) {
                    merge_add_remote_view(mcutwo_merge2, c.caller, second_party());
                } else if (c.callee == third_party()) {
                    merge_add_remote_view(mcutwo_merge1, c.caller, third_party());
                }
                break;
            case TopologyModel::MCUMULTI:
                if (c.caller == plan.initiator) {
                    merge_add_remote_view(mcumulti_merge, c.caller, c.callee);
                }
                break;
            default:
                break;  // SFU/MCU progress on connected, not on answer
        }
    }

    void merge_add_remote_view(const MergeId& merge, const PeerId& holder, const PeerId& origin) {
        auto view = remote_view_of_impl(holder, origin);
        if (!view) return;
        merge_add_traced(merge, *view);
    }

    void send_expect_call_update(Connection& c) {
        if (plan.faults.omit_expect_call) return;
        SessionDescription sdp;
        sdp.kind = SdpKind::offer;
        sdp.from = c.caller;
        sdp.to = c.callee;
        sdp.attributes[kAttrModel] = to_string(plan.model);
        sdp.attributes[kAttrExpectCall] = third_party().value;
        const MediaStream& local = streams.get(peers.at(c.caller).local_stream);
        for (const Track& t : local.tracks) {
            sdp.media_lines.push_back(MediaLine{t.kind, t.id, t.origin});
        }
        SignalMessage msg;
        msg.kind = SignalKind::offer;
        msg.room = room;
        msg.from = c.caller;
        msg.to = c.callee;
        msg.payload = sdp;
        trace_msg(c.caller, c.callee, "offer",
                  "conn=" + c.info.id.str() + " media=" + format_media_lines(sdp.media_lines) +
                      " attrs=" + format_attrs(sdp.attributes));
        bus.send(std::move(msg));
    }

    void on_caller_connected(Connection& c) {
        switch (plan.model) {
            case TopologyModel::SFU:
                if (c.callee == second_party() && c.info.id.seq == 0) {
                    // The third-party call carries the initiator's tracks and
                    // the second party's stream: a media prerequisite.
                    std::vector<StreamId> attach{peers.at(plan.initiator).local_stream};
                    if (auto view = remote_view_of_impl(plan.initiator, second_party())) {
                        attach.push_back(*view);
                    }
                    open_connection(plan.initiator, third_party(), attach, {}, false);
                } else if (c.callee == third_party()) {
                    if (auto view = remote_view_of_impl(plan.initiator, third_party())) {
                        open_connection(plan.initiator, second_party(), {*view}, {}, true);
                    }
                }
                break;
            case TopologyModel::MCU:
                if (c.callee == second_party() && c.info.id.seq == 0) {
                    MergedStream& m = create_merge(plan.initiator);
                    mcu_merge = m.merge_id;
                    merge_add_traced(m.merge_id, peers.at(plan.initiator).local_stream);
                    if (auto view = remote_view_of_impl(plan.initiator, second_party())) {
                        merge_add_traced(m.merge_id, *view);
                    }
                    open_connection(plan.initiator, third_party(), {m.out_stream}, {}, false);
                } else if (c.callee == third_party()) {
                    if (auto view = remote_view_of_impl(plan.initiator, third_party())) {
                        open_connection(plan.initiator, second_party(), {*view}, {}, true);
                    }
                }
                break;
            default:
                break;
        }
    }

    void on_callee_connected(Connection& c) {
        if (plan.model == TopologyModel::MESH && c.caller == plan.initiator &&
            c.callee == third_party()) {
            // Step 6 never precedes conn(A,C) connected: the third party calls
            // the second only once its own call with the initiator is up.
            discharge(kAttrCallParty, third_party(), second_party().value);
            open_connection(third_party(), second_party(), {peers.at(third_party()).local_stream}, {},
                            false);
        }
    }

    void discharge(const std::string& attribute, const PeerId& holder, const std::string& value) {
        for (auto& o : obligations) {
            if (o.attribute == attribute && o.holder == holder && o.value == value) {
                o.discharged++;
                return;
            }
        }
        obligations.push_back(Obligation{attribute, holder, value, 1});
    }

    // ----- hangup / teardown ------------------------------------------------------

    void hangup(const PeerId& leaver) {
        auto it = peers.find(leaver);
        if (it == peers.end()) throw std::invalid_argument("hangup: unknown peer " + leaver.value);
        if (it->second.left) return;
        it->second.left = true;
        trace_action(leaver, "hangup");

        for (auto& [id, c] : conns) {
            if (c.info.phase == ConnPhase::closed) continue;
            if (id.caller == leaver || id.callee == leaver) {
                PeerId other = id.caller == leaver ? id.callee : id.caller;
                SignalMessage msg;
                msg.kind = SignalKind::bye;
                msg.room = room;
                msg.from = leaver;
                msg.to = other;
                msg.payload = std::string("hangup");
                trace_msg(leaver, other, "bye", "conn=" + id.str() + " reason=hangup");
                bus.send(std::move(msg));
                close_connection(c);
            }
        }

        std::vector<PeerId> remaining;
        for (const auto& p : all_parties) {
            if (!peers.at(p).left) remaining.push_back(p);
        }
        bool initiator_remains =
            std::find(remaining.begin(), remaining.end(), plan.initiator) != remaining.end();
        if (!initiator_remains || remaining.size() < 2) {
            full_teardown();
        }
    }

    void on_bye(const PeerId& self, const SignalMessage& msg) {
        std::string reason = std::holds_alternative<std::string>(msg.payload)
                                 ? std::get<std::string>(msg.payload)
                                 : std::string{};
        for (auto& [id, c] : conns) {
            if (c.info.phase == ConnPhase::closed) continue;
            if ((id.caller == msg.from && id.callee == self) ||
                (id.caller == self && id.callee == msg.from)) {
                close_connection(c);
            }
        }
        if (reason == "unexpected-offer") {
            abort_call("offer rejected by " + msg.from.value);
            return;
        }
        if (reason == "hangup" || reason == "call-ended") {
            prune_sources_from(self, msg.from);
        }
        if (msg.from == plan.initiator && reason == "hangup") {
            peers.at(msg.from).left = true;
            full_teardown();
        }
    }

    /// Drops the leaver's media from everything `owner` maintains: merge
    /// sources are pruned (consumers keep the same output stream) and
    /// re-share senders stop; a connection left with no media either way is
    /// closed.
    void prune_sources_from(const PeerId& owner, const PeerId& leaver) {
        for (const MergeId& mid : streams.merges_owned_by(owner)) {
            MergedStream& m = streams.merge(mid);
            if (m.has_origin(leaver)) {
                auto res = streams.merge_remove(m, leaver, engine.now());
                if (res.removed) {
                    trace_action(owner, "merge-remove id=" + mid.value + " origin=" + leaver.value);
                }
            }
        }

        for (auto& s : senders) {
            if (s->from != owner || s->stopped) continue;
            if (!streams.has(s->source_stream)) continue;
            const MediaStream& src = streams.get(s->source_stream);
            if (!std::holds_alternative<RemoteProvenance>(src.provenance)) continue;
            bool from_leaver = !src.tracks.empty() && src.tracks.front().origin == leaver;
            if (from_leaver) {
                s->stopped = true;
                trace_action(owner, "detach conn=" + s->conn.str() + " stream=" + s->source_stream.value);
            }
        }

        // Close connections that no longer carry anything.
        for (auto& [id, c] : conns) {
            if (c.info.phase == ConnPhase::closed) continue;
            if (id.caller != owner && id.callee != owner) continue;
            bool had = false, live = false;
            for (const auto& s : senders) {
                if (s->conn == id) {
                    had = true;
                    if (!s->stopped) live = true;
                }
            }
            if (had && !live) {
                PeerId other = id.caller == owner ? id.callee : id.caller;
                SignalMessage msg;
                msg.kind = SignalKind::bye;
                msg.room = room;
                msg.from = owner;
                msg.to = other;
                msg.payload = std::string("source-left");
                trace_msg(owner, other, "bye", "conn=" + id.str() + " reason=source-left");
                bus.send(std::move(msg));
                close_connection(c);
            }
        }
    }

    void full_teardown() {
        if (torn_down) return;
        torn_down = true;
        for (auto& [id, c] : conns) {
            if (c.info.phase == ConnPhase::closed) continue;
            SignalMessage msg;
            msg.kind = SignalKind::bye;
            msg.room = room;
            msg.from = id.caller;
            msg.to = id.callee;
            msg.payload = std::string("call-ended");
            trace_msg(id.caller, id.callee, "bye", "conn=" + id.str() + " reason=call-ended");
            bus.send(std::move(msg));
            close_connection(c);
        }
    }

    void close_connection(Connection& c) {
        if (c.info.phase == ConnPhase::closed) return;
        c.info.phase = ConnPhase::closed;
        c.info.closed_ts = engine.now();
        for (auto& s : senders) {
            if (s->conn == c.info.id) s->stopped = true;
        }
        for (auto& [key, p] : pipelines) {
            if (key.first == c.info.id) p->closed = true;
        }
    }

    // ----- add party (MCUMULTI) -----------------------------------------------------

    void add_party(const PeerId& newcomer) {
        if (plan.model != TopologyModel::MCUMULTI) {
            throw std::invalid_argument("add_party is only valid for MCUMULTI calls");
        }
        if (std::find(all_parties.begin(), all_parties.end(), newcomer) != all_parties.end()) {
            throw std::invalid_argument("duplicate participant: " + newcomer.value);
        }
        if (plan.party_count() + 1 > static_cast<std::size_t>(kMaxParties)) {
            throw std::invalid_argument("party limit reached");
        }
        plan.others.push_back(newcomer);
        all_parties.push_back(newcomer);
        add_peer_state(newcomer);
        engine.schedule_after(cfg.start_delay_ms, [this, newcomer] {
            if (aborted || torn_down) return;
            open_connection(plan.initiator, newcomer, {streams.merge(mcumulti_merge).out_stream}, {},
                            false);
        });
    }

    // ----- queries ---------------------------------------------------------------

    std::optional<StreamId> remote_view_of_impl(const PeerId& holder, const PeerId& origin) const {
        const Pipeline* best = nullptr;
        for (const auto& [key, p] : pipelines) {
            if (p->receiver == holder && p->origin == origin && p->kind == TrackKind::video) {
                if (!best || key.first.seq >= best->conn.seq) best = p.get();
            }
        }
        if (!best) return std::nullopt;
        return best->view_stream;
    }

    ConnectionCensus census() const {
        ConnectionCensus cen;
        for (const auto& p : all_parties) {
            cen.connections_per_peer[p] = 0;
            cen.video_encodes_per_peer[p] = 0;
            cen.merges_per_peer[p] = static_cast<int>(streams.merges_owned_by(p).size());
        }
        for (const auto& [id, c] : conns) {
            if (c.info.phase == ConnPhase::closed) continue;
            cen.total_connections++;
            cen.connections_per_peer[id.caller]++;
            cen.connections_per_peer[id.callee]++;
        }
        for (const auto& s : senders) {
            if (!s->stopped && s->kind == TrackKind::video) {
                auto it = conns.find(s->conn);
                if (it != conns.end() && it->second.info.phase != ConnPhase::closed) {
                    cen.video_encodes_per_peer[s->from]++;
                }
            }
        }
        return cen;
    }

    std::optional<double> mean_capture_to_render_ms(const PeerId& peer, double from_s,
                                                    double to_s) const {
        double cum0 = 0, cum1 = 0;
        std::uint64_t n0 = 0, n1 = 0;
        bool any = false;
        for (const auto& [key, p] : pipelines) {
            if (p->receiver != peer || p->kind != TrackKind::video) continue;
            const StatsSample* s0 = nullptr;
            const StatsSample* s1 = nullptr;
            for (const auto& s : p->samples) {
                if (s.t_ms <= from_s * 1000.0 + 0.5) s0 = &s;
                if (s.t_ms <= to_s * 1000.0 + 0.5) s1 = &s;
            }
            if (!s0 || !s1) continue;
            cum0 += s0->capture_to_render_s;
            n0 += s0->frames_rendered;
            cum1 += s1->capture_to_render_s;
            n1 += s1->frames_rendered;
            any = true;
        }
        if (!any || n1 <= n0) return std::nullopt;
        return (cum1 - cum0) / static_cast<double>(n1 - n0) * 1000.0;
    }
};

// ----- public forwarding --------------------------------------------------------

CallRuntime::CallRuntime(SimEngine& engine, Network& network, InSimBus& bus, CallPlan plan,
                         Config config)
    : impl_(std::make_unique<Impl>(engine, network, bus, std::move(plan), std::move(config))) {}

CallRuntime::~CallRuntime() = default;

void CallRuntime::start() { impl_->start(); }

CallRuntime::EstablishResult CallRuntime::establish() {
    impl_->start();
    SimTime horizon = impl_->engine.now() + impl_->cfg.establish_timeout_ms;
    impl_->engine.run_while(
        [this] { return impl_->all_media_flowing_ts.has_value() || impl_->aborted; }, horizon);
    EstablishResult res;
    if (impl_->all_media_flowing_ts && !impl_->aborted) {
        res.ok = true;
    } else if (impl_->aborted) {
        res.error = impl_->abort_reason;
    } else {
        impl_->abort_call("establishment timed out");
        res.error = impl_->abort_reason;
    }
    return res;
}

void CallRuntime::run_for(SimTime ms) { impl_->engine.run_until(impl_->engine.now() + ms); }

void CallRuntime::hangup(const PeerId& leaver) { impl_->hangup(leaver); }

void CallRuntime::add_party(const PeerId& newcomer) { impl_->add_party(newcomer); }

ConnectionCensus CallRuntime::census() const { return impl_->census(); }
const Trace& CallRuntime::trace() const { return impl_->trace; }
const StreamTable& CallRuntime::streams() const { return impl_->streams; }

bool CallRuntime::established() const { return impl_->all_media_flowing_ts.has_value(); }
bool CallRuntime::aborted() const { return impl_->aborted; }
const std::string& CallRuntime::abort_reason() const { return impl_->abort_reason; }
bool CallRuntime::call_active() const { return !impl_->torn_down && !impl_->aborted; }

SimTime CallRuntime::first_offer_ts() const { return impl_->first_offer_ts; }
std::optional<SimTime> CallRuntime::all_media_flowing_ts() const {
    return impl_->all_media_flowing_ts;
}

double CallRuntime::max_connection_setup_ms() const {
    double best = 0;
    for (const auto& [id, c] : impl_->conns) {
        if (c.info.setup_duration_ms > best) best = c.info.setup_duration_ms;
    }
    return best;
}

std::vector<CallRuntime::ConnectionInfo> CallRuntime::connections() const {
    std::vector<ConnectionInfo> out;
    out.reserve(impl_->conns.size());
    for (const auto& [id, c] : impl_->conns) out.push_back(c.info);
    return out;
}

std::vector<CallRuntime::Obligation> CallRuntime::obligations() const { return impl_->obligations; }

const CpuLedger& CallRuntime::cpu_ledger(const PeerId& peer) const {
    return impl_->peers.at(peer).cpu->ledger();
}

std::uint64_t CallRuntime::sender_drops(const PeerId& peer) const {
    std::uint64_t total = impl_->peers.at(peer).cpu->sender_drops();
    return total;
}

Composition CallRuntime::received_composition(const PeerId& peer, TrackKind kind) const {
    Composition out;
    for (const auto& [key, p] : impl_->pipelines) {
        if (p->receiver != peer || p->kind != kind || p->closed) continue;
        if (!p->last_render_composition) continue;
        for (const PeerId& o : *p->last_render_composition) out.insert({o, kind});
    }
    // In the all-party merge model the initiator displays its own composed
    // output; everyone sees the same layout, the owner included.
    if (impl_->plan.model == TopologyModel::MCUMULTI && peer == impl_->plan.initiator &&
        !impl_->mcumulti_merge.empty()) {
        const MergedStream& m = impl_->streams.merge(impl_->mcumulti_merge);
        auto lf = impl_->latest_frames.find(m.out_stream);
        if (lf != impl_->latest_frames.end()) {
            const auto& frame = lf->second.of(kind);
            if (frame && frame->composition) {
                for (const PeerId& o : *frame->composition) out.insert({o, kind});
            }
        }
    }
    return out;
}

std::vector<CallRuntime::PipelineStats> CallRuntime::inbound_pipelines(const PeerId& peer) const {
    std::vector<PipelineStats> out;
    for (const auto& [key, p] : impl_->pipelines) {
        if (p->receiver != peer) continue;
        PipelineStats ps;
        ps.conn = p->conn;
        ps.track = p->track;
        ps.kind = p->kind;
        ps.origin = p->origin;
        ps.stats = p->stats;
        ps.samples = p->samples;
        if (p->last_render_composition) ps.last_render_composition = *p->last_render_composition;
        ps.jb_late_lost = p->jb->late_lost_count();
        ps.jb_gap_lost = p->jb->gap_lost_count();
        ps.jb_queued = p->jb->queued();
        ps.jb_emitted = p->jb->emitted_count();
        for (const auto& s : impl_->senders) {
            if (s->conn == p->conn && s->track == p->track) {
                ps.packets_sent = s->packets_sent;
                ps.network_dropped = s->network_dropped;
                ps.sender_dropped_frames = s->dropped_frames;
            }
        }
        out.push_back(std::move(ps));
    }
    return out;
}

std::optional<StreamId> CallRuntime::remote_view_of(const PeerId& holder,
                                                    const PeerId& origin) const {
    return impl_->remote_view_of_impl(holder, origin);
}

StreamId CallRuntime::local_stream_of(const PeerId& peer) const {
    return impl_->peers.at(peer).local_stream;
}

std::vector<PeerId> CallRuntime::active_parties() const {
    std::vector<PeerId> out;
    for (const auto& p : impl_->all_parties) {
        if (!impl_->peers.at(p).left) out.push_back(p);
    }
    return out;
}

std::optional<double> CallRuntime::mean_capture_to_render_ms(const PeerId& peer, double from_s,
                                                             double to_s) const {
    return impl_->mean_capture_to_render_ms(peer, from_s, to_s);
}

std::string CallRuntime::media_trace_csv() const {
    std::string out = "time_ms,peer,track,event,rtp_seq,residency_ms\n";
    char buf[64];
    for (const auto& r : impl_->media_trace) {
        std::snprintf(buf, sizeof(buf), "%.3f", r.t);
        out += buf;
        out += ',' + r.peer.value + ',' + r.track.value + ',' + r.event + ',';
        out += std::to_string(r.rtp_seq);
        std::snprintf(buf, sizeof(buf), ",%.3f\n", r.residency_ms);
        out += buf;
    }
    return out;
}

}  // namespace snow

