#ifndef CEHR_CEHR_H
#define CEHR_CEHR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CEHR_BUILDING_LIBRARY)
#    define CEHR_API __declspec(dllexport)
#  else
#    define CEHR_API __declspec(dllimport)
#  endif
#else
#  define CEHR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cehr_status {
  CEHR_OK = 0,
  CEHR_ERR_INVALID_ARGUMENT = 1,
  CEHR_ERR_IO = 2,
  CEHR_ERR_DATA = 3,
  CEHR_ERR_GRAMMAR = 4,
  CEHR_ERR_NOT_AVAILABLE = 5,
  CEHR_ERR_INTERNAL = 6
} cehr_status;

typedef struct cehr_codec cehr_codec;
typedef struct cehr_model cehr_model;

CEHR_API const char* cehr_version(void);
/* Message of the last failed call on this thread; empty when none. */
CEHR_API const char* cehr_last_error(void);
CEHR_API const char* cehr_status_name(cehr_status status);
/* Releases strings returned through char** out-parameters. */
CEHR_API void cehr_free_string(char* s);

/* Runs a pipeline command (encode, decode, validate, train, generate,
 * evaluate, forecast, demo) configured by a JSON object. On success
 * *manifest_json receives the run manifest. */
CEHR_API cehr_status cehr_run(const char* command, const char* config_json, char** manifest_json);
/* Newline-separated command names. */
CEHR_API cehr_status cehr_commands(char** names);

/* Representation: scheme label ("cehr-gpt", "gpt-outpat", "cehr-bert",
 * "vanilla") and inpatient visit types (NULL/0 for the default {9201}). */
CEHR_API cehr_status cehr_codec_new(const char* scheme, const int64_t* inpatient_types, size_t n_types,
                                    cehr_codec** out);
CEHR_API void cehr_codec_free(cehr_codec* codec);
/* Reads concept.csv so decoded concepts land in their own domain tables. */
CEHR_API cehr_status cehr_codec_load_concepts(cehr_codec* codec, const char* concept_csv);
/* Validates one JSONL sequence record. *accepted is 1 or 0; *reason receives
 * the rejection reason name (may be NULL). */
CEHR_API cehr_status cehr_codec_validate(const cehr_codec* codec, const char* jsonl_record, int* accepted,
                                         char** reason);
/* Decodes one JSONL record into a JSON patient history. */
CEHR_API cehr_status cehr_codec_decode(const cehr_codec* codec, const char* jsonl_record, char** history_json);
/* Encodes a JSON patient history into a JSONL record. */
CEHR_API cehr_status cehr_codec_encode(const cehr_codec* codec, const char* history_json, size_t max_len,
                                       char** jsonl_record);

CEHR_API cehr_status cehr_model_load(const char* path, cehr_model** out);
CEHR_API void cehr_model_free(cehr_model* model);
CEHR_API cehr_status cehr_model_vocabulary_size(const cehr_model* model, size_t* size);
/* Next-token distribution after the given token spellings. `probs` must hold
 * vocabulary_size entries; entry i belongs to cehr_model_token(i). */
CEHR_API cehr_status cehr_model_next(const cehr_model* model, const char* const* tokens, size_t n_tokens,
                                     double* probs, size_t capacity);
CEHR_API cehr_status cehr_model_token(const cehr_model* model, size_t index, char** text);

#ifdef __cplusplus
}
#endif

#endif
