#include "venomguard/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "venomguard/error.hpp"

namespace venomguard::csv {

std::vector<Record> parse(std::string_view text) {
    std::vector<Record> out;
    Record current;
    std::string field;
    bool in_quotes = false;
    bool record_has_content = false;
    std::size_t line = 1;
    current.line = 1;

    auto finish_record = [&] {
        if (record_has_content || !field.empty() || !current.fields.empty()) {
            current.fields.push_back(std::move(field));
            out.push_back(std::move(current));
        }
        field.clear();
        current = Record{};
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                record_has_content = true;
                break;
            case ',':
                current.fields.push_back(std::move(field));
                field.clear();
                record_has_content = true;
                break;
            case '\r':
                break;
            case '\n':
                finish_record();
                ++line;
                current.line = line;
                break;
            default:
                field.push_back(c);
                record_has_content = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::Parse, "unterminated quoted field", line);
    finish_record();
    return out;
}

std::vector<Record> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    // Strip a UTF-8 byte order mark.
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
    return parse(text);
}

std::vector<Record> expect_header(std::vector<Record> records,
                                  const std::vector<std::string>& expected,
                                  const std::filesystem::path& source) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i) want += ',';
        want += expected[i];
    }
    if (records.empty()) {
        throw Error(ErrorCode::Parse, source.string() + ": missing header `" + want + "`", 1);
    }
    if (records.front().fields != expected) {
        throw Error(ErrorCode::Parse, source.string() + ": expected header `" + want + "`",
                    records.front().line);
    }
    records.erase(records.begin());
    for (const auto& r : records) {
        if (r.fields.size() != expected.size()) {
            throw Error(ErrorCode::Parse,
                        source.string() + ": expected " + std::to_string(expected.size()) +
                            " fields, found " + std::to_string(r.fields.size()),
                        r.line);
        }
    }
    return records;
}

std::string quote_if_needed(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

long long parse_int(std::string_view text, std::size_t line, std::string_view column) {
    long long value = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || text.empty()) {
        throw Error(ErrorCode::Parse,
                    "invalid integer `" + std::string(text) + "` in column " +
                        std::string(column),
                    line);
    }
    return value;
}

double parse_double(std::string_view text, std::size_t line, std::string_view column) {
    double value = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || text.empty()) {
        throw Error(ErrorCode::Parse,
                    "invalid number `" + std::string(text) + "` in column " +
                        std::string(column),
                    line);
    }
    return value;
}

}  // namespace venomguard::csv
