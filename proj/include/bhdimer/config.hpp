// config.hpp — flat key/value run descriptions shared by spec files, command
// line flags and run manifests.
//
// Spec file syntax: one `key = value` per line, `#` starts a comment. A JSON
// run manifest is accepted as well; its "spec" object is read as the same
// key/value set.

#pragma once

#include "bhdimer/experiments.hpp"
#include "bhdimer/params.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bhdimer::config {

struct Entry {
    std::string value;
    std::string origin;  // "file:line", "manifest", "--flag" or "default"
};

using KeyValues = std::map<std::string, Entry>;

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline KeyValues parse_key_values(const std::string& text, const std::string& source) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string origin = source + ":" + std::to_string(lineno);
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(origin + ": malformed line, expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ValidationError(origin + ": missing key before '='");
        }
        if (kv.count(key)) {
            throw ValidationError(origin + ": key '" + key + "' given twice (first at " + kv[key].origin + ")");
        }
        kv[key] = {value, origin};
    }
    return kv;
}

inline KeyValues parse_manifest(const std::string& text, const std::string& source) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(source + ": malformed manifest: " + e.what());
    }
    if (!j.is_object() || !j.contains("spec") || !j["spec"].is_object()) {
        throw ValidationError(source + ": manifest has no \"spec\" object");
    }
    KeyValues kv;
    for (const auto& [key, val] : j["spec"].items()) {
        const std::string origin = source + ": spec key '" + key + "'";
        if (val.is_string()) {
            kv[key] = {val.get<std::string>(), origin};
        } else if (val.is_boolean()) {
            kv[key] = {val.get<bool>() ? "true" : "false", origin};
        } else if (val.is_number_integer()) {
            kv[key] = {std::to_string(val.get<long long>()), origin};
        } else if (val.is_number()) {
            kv[key] = {experiments::format_number(val.get<double>()), origin};
        } else {
            throw ValidationError(origin + ": unsupported value type");
        }
    }
    return kv;
}

inline KeyValues load_spec_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ValidationError("cannot read spec file '" + path + "'");
    }
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        return parse_manifest(text, path);
    }
    return parse_key_values(text, path);
}

// ------------------------------------------------------------ Typed access

class Reader {
public:
    Reader(const KeyValues& kv, std::set<std::string> allowed) : kv_(kv), allowed_(std::move(allowed)) {
        for (const auto& [key, e] : kv_) {
            if (!allowed_.count(key)) {
                throw ValidationError(e.origin + ": unknown key '" + key + "'");
            }
        }
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback) const {
        check_allowed(key);
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second.value;
    }

    double real(const std::string& key, double fallback) const {
        check_allowed(key);
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        return parse_double(it->second, key);
    }

    long integer(const std::string& key, long fallback) const {
        check_allowed(key);
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string& s = it->second.value;
        long v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) {
            throw error(it->second, key, "expected an integer, got '" + s + "'");
        }
        return v;
    }

    bool boolean(const std::string& key, bool fallback) const {
        check_allowed(key);
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string& s = it->second.value;
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw error(it->second, key, "expected true or false, got '" + s + "'");
    }

    std::vector<double> real_list(const std::string& key) const {
        const auto it = kv_.find(key);
        std::vector<double> out;
        std::stringstream ss(it->second.value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(parse_double({trim(item), it->second.origin}, key));
        }
        return out;
    }

    ValidationError error(const Entry& e, const std::string& key, const std::string& what) const {
        return ValidationError(e.origin + ": key '" + key + "': " + what);
    }

    const Entry& entry(const std::string& key) const { return kv_.at(key); }

private:
    void check_allowed(const std::string& key) const {
        if (!allowed_.count(key)) {
            throw std::logic_error("config: key '" + key + "' not declared for this command");
        }
    }

    double parse_double(const Entry& e, const std::string& key) const {
        const std::string s = trim(e.value);
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw error(e, key, "expected a finite number, got '" + e.value + "'");
        }
    }

    const KeyValues& kv_;
    std::set<std::string> allowed_;
};

// Initial condition syntax: north | south | bloch:sx,sy,sz | spinor:re1,im1,re2,im2
inline experiments::InitialCondition parse_initial(const Reader& r, const std::string& key,
                                                   const std::string& fallback) {
    const std::string text = r.str(key, fallback);
    const Entry e = r.has(key) ? r.entry(key) : Entry{text, "default"};
    auto numbers = [&](const std::string& body) {
        std::vector<double> out;
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t pos = 0;
                const std::string t = trim(item);
                out.push_back(std::stod(t, &pos));
                if (pos != t.size()) throw std::invalid_argument(t);
            } catch (const std::exception&) {
                throw r.error(e, key, "bad number '" + item + "'");
            }
        }
        return out;
    };
    if (text == "north") return meanfield::north_pole();
    if (text == "south") return meanfield::south_pole();
    if (text.rfind("bloch:", 0) == 0) {
        const auto v = numbers(text.substr(6));
        if (v.size() != 3) throw r.error(e, key, "bloch: needs three components");
        meanfield::BlochState b{v[0], v[1], v[2], 1.0};
        if (b.sphere_defect() > meanfield::kSphereTolerance) {
            throw r.error(e, key, "initial Bloch vector is off the sphere s^2 = 1/4 (s^2 = " +
                                      experiments::format_number(b.radius_squared()) + ")");
        }
        return b;
    }
    if (text.rfind("spinor:", 0) == 0) {
        const auto v = numbers(text.substr(7));
        if (v.size() != 4) throw r.error(e, key, "spinor: needs four components");
        meanfield::SpinorState s{{v[0], v[1]}, {v[2], v[3]}, 0.0};
        if (!(s.norm() > 0.0)) throw r.error(e, key, "spinor must be nonzero");
        return s;
    }
    throw r.error(e, key, "expected north, south, bloch:sx,sy,sz or spinor:re1,im1,re2,im2");
}

inline std::string format_initial(const experiments::InitialCondition& ic) {
    using experiments::format_number;
    if (const auto* b = std::get_if<meanfield::BlochState>(&ic)) {
        return "bloch:" + format_number(b->sx) + "," + format_number(b->sy) + "," + format_number(b->sz);
    }
    const auto& s = std::get<meanfield::SpinorState>(ic);
    return "spinor:" + format_number(s.psi1.real()) + "," + format_number(s.psi1.imag()) + "," +
           format_number(s.psi2.real()) + "," + format_number(s.psi2.imag());
}

} // namespace bhdimer::config
