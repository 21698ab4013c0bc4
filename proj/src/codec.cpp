#include "evf/codec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace evf {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xff));
    out.push_back(uint8_t(v >> 8));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0] | (uint16_t(p[1]) << 8)); }

uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

} // namespace

std::vector<uint8_t> encode_events(const EventStream& stream) {
    std::vector<uint8_t> out;
    out.reserve(kEvfHeaderBytes + kEvfRecordBytes * stream.events.size());
    out.insert(out.end(), {'E', 'V', 'F', '1'});
    put_u16(out, stream.width);
    put_u16(out, stream.height);
    put_u64(out, stream.events.size());
    for (const Event& e : stream.events) {
        put_u64(out, e.t);
        put_u16(out, e.x);
        put_u16(out, e.y);
        out.push_back(uint8_t(e.p));
    }
    return out;
}

EventStream decode_events(std::span<const uint8_t> bytes) {
    if (bytes.size() < 4 || bytes[0] != 'E' || bytes[1] != 'V' || bytes[2] != 'F' ||
        bytes[3] != '1')
        throw Error(Errc::bad_magic, "expected EVF1 header");
    if (bytes.size() < kEvfHeaderBytes)
        throw Error(Errc::truncated, "header needs 16 bytes, got " +
                                         std::to_string(bytes.size()));

    EventStream stream;
    stream.width = get_u16(bytes.data() + 4);
    stream.height = get_u16(bytes.data() + 6);
    const uint64_t count = get_u64(bytes.data() + 8);

    // Guard the size arithmetic before trusting a 64-bit count.
    if (count > (bytes.size() - kEvfHeaderBytes) / kEvfRecordBytes)
        throw Error(Errc::truncated, "count " + std::to_string(count) +
                                         " exceeds payload of " +
                                         std::to_string(bytes.size()) + " bytes");
    const size_t expected = kEvfHeaderBytes + size_t(count) * kEvfRecordBytes;
    if (bytes.size() != expected)
        throw Error(Errc::truncated, "file is " + std::to_string(bytes.size()) +
                                         " bytes, layout implies " + std::to_string(expected));

    stream.events.resize(size_t(count));
    const uint8_t* p = bytes.data() + kEvfHeaderBytes;
    uint64_t prev_t = 0;
    for (size_t i = 0; i < count; ++i, p += kEvfRecordBytes) {
        Event& e = stream.events[i];
        e.t = get_u64(p);
        e.x = get_u16(p + 8);
        e.y = get_u16(p + 10);
        const uint8_t pol = p[12];
        if (pol > 1)
            throw Error(Errc::out_of_bounds,
                        "polarity byte " + std::to_string(pol) + " at record " +
                            std::to_string(i));
        e.p = Polarity(pol);
        if (e.x >= stream.width || e.y >= stream.height)
            throw Error(Errc::out_of_bounds,
                        "record " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                            std::to_string(e.y) + ") outside " + std::to_string(stream.width) +
                            "x" + std::to_string(stream.height));
        if (i > 0 && e.t < prev_t)
            throw Error(Errc::unordered, "timestamp decreases at record " + std::to_string(i));
        prev_t = e.t;
    }
    return stream;
}

namespace {

using nlohmann::json;

uint64_t require_u64(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw Error(Errc::schema_error, std::string("missing key '") + key + "'");
    if (!it->is_number_unsigned())
        throw Error(Errc::schema_error, std::string("key '") + key + "' must be a non-negative integer");
    return it->get<uint64_t>();
}

uint16_t require_u16(const json& obj, const char* key) {
    const uint64_t v = require_u64(obj, key);
    if (v > 0xffff)
        throw Error(Errc::schema_error, std::string("key '") + key + "' exceeds 16-bit range");
    return uint16_t(v);
}

json box_to_json(const BoxRecord& b) {
    return json{{"track_id", b.track_id},
                {"class", class_name(b.class_label)},
                {"frame_index", b.frame_index},
                {"t_start_us", b.t_start},
                {"t_end_us", b.t_end},
                {"x_min", b.x_min},
                {"y_min", b.y_min},
                {"x_max", b.x_max},
                {"y_max", b.y_max}};
}

BoxRecord box_from_json(const json& obj) {
    if (!obj.is_object()) throw Error(Errc::schema_error, "line is not a JSON object");
    BoxRecord b;
    b.track_id = require_u64(obj, "track_id");
    auto cls = obj.find("class");
    if (cls == obj.end() || !cls->is_string())
        throw Error(Errc::schema_error, "missing or non-string key 'class'");
    b.class_label = class_from_name(cls->get<std::string>());
    b.frame_index = require_u64(obj, "frame_index");
    b.t_start = require_u64(obj, "t_start_us");
    b.t_end = require_u64(obj, "t_end_us");
    b.x_min = require_u16(obj, "x_min");
    b.y_min = require_u16(obj, "y_min");
    b.x_max = require_u16(obj, "x_max");
    b.y_max = require_u16(obj, "y_max");
    validate_box(b);
    return b;
}

} // namespace

AnnotationSet read_annotations(const std::string& text) {
    AnnotationSet set;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded())
            throw Error(Errc::schema_error, "line " + std::to_string(line_no) + ": invalid JSON");
        try {
            set.records.push_back(box_from_json(obj));
        } catch (const Error& e) {
            if (e.code() != Errc::schema_error) throw;
            throw Error(Errc::schema_error, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    set.validate_groups();
    return set;
}

std::string write_annotations(const AnnotationSet& set) {
    std::vector<const BoxRecord*> order;
    order.reserve(set.records.size());
    for (const BoxRecord& b : set.records) order.push_back(&b);
    std::stable_sort(order.begin(), order.end(), [](const BoxRecord* a, const BoxRecord* b) {
        return a->track_id != b->track_id ? a->track_id < b->track_id
                                          : a->frame_index < b->frame_index;
    });
    std::string out;
    for (const BoxRecord* b : order) {
        out += box_to_json(*b).dump();
        out += '\n';
    }
    return out;
}

Frame render_frame(const EventStream& stream, uint64_t t0, uint64_t t1) {
    if (t0 > t1) throw std::invalid_argument("render_frame: t0 > t1");
    Frame frame;
    frame.width = stream.width;
    frame.height = stream.height;
    frame.counts.assign(size_t(stream.width) * stream.height, 0);
    // Events are time-ordered, so the window is one contiguous run.
    auto lo = std::lower_bound(stream.events.begin(), stream.events.end(), t0,
                               [](const Event& e, uint64_t t) { return e.t < t; });
    auto hi = std::lower_bound(lo, stream.events.end(), t1,
                               [](const Event& e, uint64_t t) { return e.t < t; });
    for (auto it = lo; it != hi; ++it) ++frame.at(it->x, it->y);
    return frame;
}

std::string write_pgm(const Frame& frame) {
    uint32_t peak = 1;
    for (uint32_t c : frame.counts) peak = std::max(peak, c);
    const uint32_t maxval = std::min<uint32_t>(peak, 65535);
    std::string out = "P5\n" + std::to_string(frame.width) + " " +
                      std::to_string(frame.height) + "\n" + std::to_string(maxval) + "\n";
    if (maxval < 256) {
        for (uint32_t c : frame.counts) out.push_back(char(uint8_t(std::min(c, maxval))));
    } else {
        for (uint32_t c : frame.counts) {
            const uint16_t v = uint16_t(std::min(c, maxval));
            out.push_back(char(uint8_t(v >> 8))); // PGM 2-byte samples are big-endian
            out.push_back(char(uint8_t(v & 0xff)));
        }
    }
    return out;
}

std::vector<uint8_t> read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

void write_binary_file(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(Errc::io_error, "short write to " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");
    out << text;
    if (!out) throw Error(Errc::io_error, "short write to " + path);
}

} // namespace evf
