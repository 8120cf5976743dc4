#ifndef REVSTRIKE_H
#define REVSTRIKE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RevstrikeStatus {
  REVSTRIKE_STATUS_OK = 0,
  REVSTRIKE_STATUS_NULL_ARGUMENT = 1,
  REVSTRIKE_STATUS_INVALID_UTF8 = 2,
  REVSTRIKE_STATUS_PARSE_ERROR = 3,
  REVSTRIKE_STATUS_INVALID_GRAMMAR = 4,
  REVSTRIKE_STATUS_SAMPLE_ERROR = 5,
  REVSTRIKE_STATUS_LEDGER_ERROR = 6,
  REVSTRIKE_STATUS_IO_ERROR = 7,
  REVSTRIKE_STATUS_NOT_FOUND = 8,
  REVSTRIKE_STATUS_CHECK_FAILED = 9,
  REVSTRIKE_STATUS_PANIC = 10,
} RevstrikeStatus;

typedef struct RevstrikeGrammar RevstrikeGrammar;

typedef struct RevstrikeLedger RevstrikeLedger;

/**
 * Owned byte buffer; release with [`revstrike_buffer_free`].
 */
typedef struct RevstrikeBuffer {
  uint8_t *data;
  size_t len;
} RevstrikeBuffer;

/**
 * Result of [`revstrike_ledger_audit`].
 */
typedef struct RevstrikeAudit {
  size_t records_checked;
  size_t mutated;
  size_t malformed;
  size_t partial_tails;
  size_t referential;
  bool clean;
} RevstrikeAudit;

/**
 * Result of [`revstrike_check_static`].
 */
typedef struct RevstrikeVerdict {
  bool confirmed;
  /**
   * Kebab-case reason; release with [`revstrike_string_free`].
   */
  char *reason;
} RevstrikeVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Release with
 * [`revstrike_string_free`].
 */
char *revstrike_last_error(void);

/**
 * # Safety
 * `s` is NULL or a string returned by this library and not yet freed.
 */
void revstrike_string_free(char *s);

/**
 * # Safety
 * `buf` was filled by this library and not yet freed.
 */
void revstrike_buffer_free(struct RevstrikeBuffer buf);

/**
 * Library version, static; do not free.
 */
const char *revstrike_version(void);

/**
 * # Safety
 * `out` is a valid pointer to writable storage for a handle.
 */
enum RevstrikeStatus revstrike_grammar_builtin(struct RevstrikeGrammar **out);

/**
 * Parses grammar text, closes it under ε and validates it.
 *
 * # Safety
 * `text` is a NUL-terminated string; `out` is writable.
 */
enum RevstrikeStatus revstrike_grammar_parse(const char *text, struct RevstrikeGrammar **out);

/**
 * # Safety
 * `g` is NULL or a handle from this library, freed at most once.
 */
void revstrike_grammar_free(struct RevstrikeGrammar *g);

/**
 * Canonical text form of the grammar.
 *
 * # Safety
 * `g` is a live grammar handle; `out` is writable.
 */
enum RevstrikeStatus revstrike_grammar_to_text(const struct RevstrikeGrammar *g, char **out);

/**
 * Wire bytes of the response the stub would serve on connection `index`
 * of a campaign, with freshly seeded tokens.
 *
 * # Safety
 * `g` is a live grammar handle, `campaign_id` a NUL-terminated string and
 * `out` writable.
 */
enum RevstrikeStatus revstrike_craft_response(const struct RevstrikeGrammar *g,
                                              const char *campaign_id,
                                              uint64_t seed,
                                              uint64_t index,
                                              struct RevstrikeBuffer *out);

/**
 * Seeded tracking token (36-character UUIDv4).
 *
 * # Safety
 * `out` is writable.
 */
enum RevstrikeStatus revstrike_token_generate(uint64_t seed, char **out);

/**
 * Opens the campaign in `dir`, creating it when it has no manifest yet.
 *
 * # Safety
 * String arguments are NUL-terminated; `out` is writable.
 */
enum RevstrikeStatus revstrike_ledger_create(const char *dir,
                                             const char *campaign_id,
                                             uint64_t seed,
                                             struct RevstrikeLedger **out);

/**
 * Opens an existing campaign.
 *
 * # Safety
 * `dir` is NUL-terminated; `out` is writable.
 */
enum RevstrikeStatus revstrike_ledger_open(const char *dir, struct RevstrikeLedger **out);

/**
 * # Safety
 * `l` is NULL or a handle from this library, freed at most once.
 */
void revstrike_ledger_free(struct RevstrikeLedger *l);

/**
 * Records the response for connection `index` as the stub would, and
 * returns its response id.
 *
 * # Safety
 * `l` and `g` are live handles; `out_response_id` is writable.
 */
enum RevstrikeStatus revstrike_ledger_record_crafted(const struct RevstrikeLedger *l,
                                                     const struct RevstrikeGrammar *g,
                                                     uint64_t index,
                                                     char **out_response_id);

/**
 * Response id and field name a token was planted in.
 * [`RevstrikeStatus::NotFound`] when the token was never issued.
 *
 * # Safety
 * `l` is a live handle, `token` NUL-terminated, outputs writable.
 */
enum RevstrikeStatus revstrike_ledger_lookup_token(const struct RevstrikeLedger *l,
                                                   const char *token,
                                                   char **out_response_id,
                                                   char **out_field);

/**
 * Stores a Phase-1 report from `scanner`, records every tainted flow it
 * reveals and writes their number to `out_flows`.
 *
 * # Safety
 * `l` is a live handle, `scanner` NUL-terminated, `report` points to `len`
 * readable bytes, `out_flows` is writable.
 */
enum RevstrikeStatus revstrike_ledger_ingest_report(const struct RevstrikeLedger *l,
                                                    const char *scanner,
                                                    uint32_t round,
                                                    const uint8_t *report,
                                                    size_t len,
                                                    size_t *out_flows);

/**
 * Verifies every journal in the campaign directory.
 *
 * # Safety
 * `dir` is NUL-terminated; `out` is writable.
 */
enum RevstrikeStatus revstrike_ledger_audit(const char *dir, struct RevstrikeAudit *out);

/**
 * Whether `payload` reached an executable position in the report.
 *
 * # Safety
 * `report` points to `len` readable bytes, `payload` is NUL-terminated and
 * `out` is writable.
 */
enum RevstrikeStatus revstrike_check_static(const uint8_t *report,
                                            size_t len,
                                            const char *payload,
                                            struct RevstrikeVerdict *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REVSTRIKE_H */
