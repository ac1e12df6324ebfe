// Copyright 2026 The TinyForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* Conformance driver for a generated model.
 *
 * Usage: <binary> <in.fvf> <out.fvf>
 * Build with -DMODEL_PREFIX=<prefix> -DMODEL_PREFIX_UPPER=<PREFIX>
 * -DMODEL_HEADER="<prefix>.h".
 */
#include <stdint.h>
#include <stdio.h>
#include <string.h>

#define STR_(x) #x
#define STR(x) STR_(x)
#include STR(MODEL_HEADER)

#define CAT_(a, b) a##b
#define CAT(a, b) CAT_(a, b)
#define MODEL_FN(name) CAT(MODEL_PREFIX, name)
#define MODEL_CONST(name) CAT(MODEL_PREFIX_UPPER, name)

static int read_u32(FILE *f, uint32_t *v) {
  unsigned char b[4];
  if (fread(b, 1, 4, f) != 4) return 0;
  *v = (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
  return 1;
}

static int write_u32(FILE *f, uint32_t v) {
  unsigned char b[4];
  b[0] = (unsigned char)(v & 0xFFu);
  b[1] = (unsigned char)((v >> 8) & 0xFFu);
  b[2] = (unsigned char)((v >> 16) & 0xFFu);
  b[3] = (unsigned char)((v >> 24) & 0xFFu);
  return fwrite(b, 1, 4, f) == 4;
}

static int read_f32(FILE *f, float *x) {
  uint32_t v;
  if (!read_u32(f, &v)) return 0;
  memcpy(x, &v, sizeof v);
  return 1;
}

static int write_f32(FILE *f, float x) {
  uint32_t v;
  memcpy(&v, &x, sizeof v);
  return write_u32(f, v);
}

int main(int argc, char **argv) {
  FILE *in, *out;
  uint32_t count, len, n, i;
  int status = 0;
  if (argc != 3) {
    fprintf(stderr, "usage: %s <in.fvf> <out.fvf>\n", argv[0]);
    return 2;
  }
  in = fopen(argv[1], "rb");
  if (!in) {
    fprintf(stderr, "cannot open %s\n", argv[1]);
    return 1;
  }
  if (!read_u32(in, &count) || !read_u32(in, &len)) {
    fprintf(stderr, "%s: truncated header\n", argv[1]);
    fclose(in);
    return 1;
  }
  if (len != (uint32_t)MODEL_CONST(_INPUT_LEN)) {
    fprintf(stderr, "%s: vector length %lu, model expects %lu\n", argv[1], (unsigned long)len,
            (unsigned long)MODEL_CONST(_INPUT_LEN));
    fclose(in);
    return 3;
  }
  out = fopen(argv[2], "wb");
  if (!out) {
    fprintf(stderr, "cannot open %s\n", argv[2]);
    fclose(in);
    return 1;
  }
  write_u32(out, count);
  write_u32(out, (uint32_t)MODEL_CONST(_OUTPUT_LEN));
  MODEL_FN(_init)();
  for (n = 0; n < count && status == 0; ++n) {
    float *x = MODEL_FN(_input)();
    const float *y;
    size_t out_len = 0;
    for (i = 0; i < len; ++i) {
      if (!read_f32(in, &x[i])) {
        fprintf(stderr, "%s: truncated at vector %lu\n", argv[1], (unsigned long)n);
        status = 1;
        break;
      }
    }
    if (status) break;
    y = MODEL_FN(_invoke)(&out_len);
    for (i = 0; i < (uint32_t)out_len; ++i) {
      if (!write_f32(out, y[i])) status = 1;
    }
  }
  fclose(in);
  if (fclose(out) != 0) status = 1;
  return status;
}
