#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "playtitle/corpus.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("playtitle-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline playtitle::Playlist playlist(std::string pid, std::string title, std::string date,
                                    std::vector<std::pair<std::string, std::vector<std::string>>> tracks) {
    playtitle::Playlist p;
    p.pid = std::move(pid);
    p.title = std::move(title);
    p.modified_at = playtitle::Date::parse(date);
    for (auto& [id, artists] : tracks) p.tracks.push_back({id, artists});
    return p;
}

}  // namespace testing
