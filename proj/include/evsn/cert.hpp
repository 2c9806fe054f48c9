#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "evsn/behavior.hpp"

namespace evsn {

/// Reader for the CERT insider-threat r6.2 activity files. Column layouts
/// (header row required, columns located by name):
///
///   logon.csv   id,date,user,pc,activity                 activity Logon|Logoff
///   device.csv  id,date,user,pc,file_tree,activity       activity Connect|Disconnect
///   file.csv    id,date,user,pc,filename,activity,to_removable_media,
///               from_removable_media,content             activity "File Open" etc.
///   email.csv   id,date,user,pc,to,cc,bcc,from,activity,size,attachments,content
///   http.csv    id,date,user,pc,url,activity,content
///
/// Dates are "MM/DD/YYYY HH:MM:SS" and read as UTC. Missing optional columns
/// are tolerated; rows lacking date or user, or with an unparseable date, are
/// counted as malformed and skipped.
struct CertOptions {
  /// Recipients outside this domain make an email external.
  std::string internal_domain = "dtaa.com";
};

struct CertIngest {
  std::vector<ActivityRecord> records;
  std::size_t malformed = 0;
  std::map<std::string, std::size_t> rows_per_file;  // parsed rows by file name
};

CertIngest ingest_cert(const std::filesystem::path& directory, const CertOptions& options = {});

/// Parses "MM/DD/YYYY HH:MM:SS"; returns false on any defect.
bool parse_cert_date(const std::string& text, Timestamp& out);

/// Splits CSV text into records of fields, honoring double-quoted fields
/// with embedded separators, doubled quotes and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace evsn
