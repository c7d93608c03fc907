/* Minimal span-based JSON reader for guest payloads.
 *
 * Supports objects, arrays, strings (common escapes + BMP \uXXXX), numbers,
 * true/false/null. No allocation; values are spans into the input buffer and
 * strings are unescaped into caller buffers.
 */
#ifndef LIMES_JSON_H
#define LIMES_JSON_H

#include "limes_guest.h"

typedef struct {
    const char *p;
    usize n;
} jspan;

static inline int j_is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

static inline usize j_skip_ws(jspan s, usize i) {
    while (i < s.n && j_is_ws(s.p[i]))
        i++;
    return i;
}

/* Skips one complete value starting at i; returns index past it, or 0 on error
 * (index 0 can never legitimately follow a value). */
static inline usize j_skip_value(jspan s, usize i);

static inline usize j_skip_string(jspan s, usize i) {
    if (i >= s.n || s.p[i] != '"')
        return 0;
    i++;
    while (i < s.n) {
        char c = s.p[i];
        if (c == '\\') {
            i += 2;
            continue;
        }
        if (c == '"')
            return i + 1;
        i++;
    }
    return 0;
}

static inline usize j_skip_value(jspan s, usize i) {
    i = j_skip_ws(s, i);
    if (i >= s.n)
        return 0;
    char c = s.p[i];
    if (c == '"')
        return j_skip_string(s, i);
    if (c == '{' || c == '[') {
        char close = c == '{' ? '}' : ']';
        i = j_skip_ws(s, i + 1);
        if (i < s.n && s.p[i] == close)
            return i + 1;
        for (;;) {
            if (c == '{') {
                i = j_skip_string(s, j_skip_ws(s, i));
                if (!i)
                    return 0;
                i = j_skip_ws(s, i);
                if (i >= s.n || s.p[i] != ':')
                    return 0;
                i++;
            }
            i = j_skip_value(s, i);
            if (!i)
                return 0;
            i = j_skip_ws(s, i);
            if (i >= s.n)
                return 0;
            if (s.p[i] == close)
                return i + 1;
            if (s.p[i] != ',')
                return 0;
            i++;
        }
    }
    if (c == 't')
        return i + 4 <= s.n ? i + 4 : 0;
    if (c == 'f')
        return i + 5 <= s.n ? i + 5 : 0;
    if (c == 'n')
        return i + 4 <= s.n ? i + 4 : 0;
    /* number */
    usize start = i;
    if (i < s.n && (s.p[i] == '-' || s.p[i] == '+'))
        i++;
    while (i < s.n &&
           ((s.p[i] >= '0' && s.p[i] <= '9') || s.p[i] == '.' || s.p[i] == 'e' ||
            s.p[i] == 'E' || s.p[i] == '-' || s.p[i] == '+'))
        i++;
    return i > start ? i : 0;
}

/* Looks up a top-level key in an object span. Returns 1 and sets *val on hit. */
static inline int json_find(jspan obj, const char *key, jspan *val) {
    usize i = j_skip_ws(obj, 0);
    if (i >= obj.n || obj.p[i] != '{')
        return 0;
    i = j_skip_ws(obj, i + 1);
    if (i < obj.n && obj.p[i] == '}')
        return 0;
    usize keylen = gstrlen(key);
    for (;;) {
        i = j_skip_ws(obj, i);
        if (i >= obj.n || obj.p[i] != '"')
            return 0;
        usize kstart = i + 1;
        usize kend = j_skip_string(obj, i);
        if (!kend)
            return 0;
        int match = (kend - 1 - kstart == keylen);
        if (match)
            for (usize k = 0; k < keylen; k++)
                if (obj.p[kstart + k] != key[k]) {
                    match = 0;
                    break;
                }
        i = j_skip_ws(obj, kend);
        if (i >= obj.n || obj.p[i] != ':')
            return 0;
        i++;
        usize vstart = j_skip_ws(obj, i);
        usize vend = j_skip_value(obj, i);
        if (!vend)
            return 0;
        if (match) {
            val->p = obj.p + vstart;
            val->n = vend - vstart;
            return 1;
        }
        i = j_skip_ws(obj, vend);
        if (i >= obj.n)
            return 0;
        if (obj.p[i] == '}')
            return 0;
        if (obj.p[i] != ',')
            return 0;
        i++;
    }
}

static inline int json_as_longlong(jspan v, long long *out) {
    usize i = j_skip_ws(v, 0);
    int neg = 0;
    if (i < v.n && v.p[i] == '-') {
        neg = 1;
        i++;
    }
    if (i >= v.n || v.p[i] < '0' || v.p[i] > '9')
        return 0;
    long long acc = 0;
    while (i < v.n && v.p[i] >= '0' && v.p[i] <= '9') {
        acc = acc * 10 + (v.p[i] - '0');
        i++;
    }
    i = j_skip_ws(v, i);
    if (i != v.n)
        return 0; /* trailing junk, or a float where an int is expected */
    *out = neg ? -acc : acc;
    return 1;
}

static inline double j_pow10(int k) {
    double r = 1.0;
    while (k-- > 0)
        r *= 10.0;
    return r;
}

/* Decimal -> double. Mantissa digits beyond 2^53 lose precision; payload
 * encoders keep numbers short, so a single correctly-rounded division below
 * reproduces the host-side float value bit for bit. */
static inline int json_as_double(jspan v, double *out) {
    usize i = j_skip_ws(v, 0);
    int neg = 0;
    if (i < v.n && v.p[i] == '-') {
        neg = 1;
        i++;
    }
    if (i >= v.n)
        return 0;
    double mant = 0.0;
    int any = 0, frac_digits = 0, exp = 0;
    while (i < v.n && v.p[i] >= '0' && v.p[i] <= '9') {
        mant = mant * 10.0 + (v.p[i] - '0');
        any = 1;
        i++;
    }
    if (i < v.n && v.p[i] == '.') {
        i++;
        while (i < v.n && v.p[i] >= '0' && v.p[i] <= '9') {
            mant = mant * 10.0 + (v.p[i] - '0');
            frac_digits++;
            any = 1;
            i++;
        }
    }
    if (!any)
        return 0;
    if (i < v.n && (v.p[i] == 'e' || v.p[i] == 'E')) {
        i++;
        int eneg = 0;
        if (i < v.n && (v.p[i] == '-' || v.p[i] == '+')) {
            eneg = v.p[i] == '-';
            i++;
        }
        if (i >= v.n || v.p[i] < '0' || v.p[i] > '9')
            return 0;
        while (i < v.n && v.p[i] >= '0' && v.p[i] <= '9') {
            exp = exp * 10 + (v.p[i] - '0');
            i++;
        }
        if (eneg)
            exp = -exp;
    }
    i = j_skip_ws(v, i);
    if (i != v.n)
        return 0;
    int scale = exp - frac_digits;
    double r;
    if (scale >= 0)
        r = mant * j_pow10(scale);
    else
        r = mant / j_pow10(-scale);
    *out = neg ? -r : r;
    return 1;
}

static inline int json_as_bool(jspan v, int *out) {
    usize i = j_skip_ws(v, 0);
    if (i + 4 <= v.n && v.p[i] == 't') {
        *out = 1;
        return 1;
    }
    if (i + 5 <= v.n && v.p[i] == 'f') {
        *out = 0;
        return 1;
    }
    return 0;
}

/* Unescapes a string value into buf; returns 1 on success. */
static inline int json_as_string(jspan v, char *buf, usize cap, usize *out_len) {
    usize i = j_skip_ws(v, 0);
    if (i >= v.n || v.p[i] != '"')
        return 0;
    i++;
    usize o = 0;
    while (i < v.n && v.p[i] != '"') {
        char c = v.p[i];
        if (c == '\\') {
            if (i + 1 >= v.n)
                return 0;
            char e = v.p[i + 1];
            i += 2;
            if (e == 'u') {
                if (i + 4 > v.n)
                    return 0;
                u32 cp = 0;
                for (int k = 0; k < 4; k++) {
                    char h = v.p[i + k];
                    u32 d;
                    if (h >= '0' && h <= '9')
                        d = h - '0';
                    else if (h >= 'a' && h <= 'f')
                        d = h - 'a' + 10;
                    else if (h >= 'A' && h <= 'F')
                        d = h - 'A' + 10;
                    else
                        return 0;
                    cp = cp * 16 + d;
                }
                i += 4;
                if (cp >= 0xD800 && cp <= 0xDFFF)
                    return 0; /* surrogate pairs unsupported */
                if (cp < 0x80) {
                    if (o + 1 > cap)
                        return 0;
                    buf[o++] = (char)cp;
                } else if (cp < 0x800) {
                    if (o + 2 > cap)
                        return 0;
                    buf[o++] = (char)(0xC0 | (cp >> 6));
                    buf[o++] = (char)(0x80 | (cp & 0x3F));
                } else {
                    if (o + 3 > cap)
                        return 0;
                    buf[o++] = (char)(0xE0 | (cp >> 12));
                    buf[o++] = (char)(0x80 | ((cp >> 6) & 0x3F));
                    buf[o++] = (char)(0x80 | (cp & 0x3F));
                }
                continue;
            }
            char decoded;
            switch (e) {
            case '"': decoded = '"'; break;
            case '\\': decoded = '\\'; break;
            case '/': decoded = '/'; break;
            case 'n': decoded = '\n'; break;
            case 't': decoded = '\t'; break;
            case 'r': decoded = '\r'; break;
            case 'b': decoded = '\b'; break;
            case 'f': decoded = '\f'; break;
            default: return 0;
            }
            if (o + 1 > cap)
                return 0;
            buf[o++] = decoded;
            continue;
        }
        if (o + 1 > cap)
            return 0;
        buf[o++] = c;
        i++;
    }
    if (i >= v.n)
        return 0;
    *out_len = o;
    return 1;
}

/* Iterates string elements of an array span. *pos starts at 0. */
static inline int json_next_array_string(jspan arr, usize *pos, jspan *elem) {
    usize i = *pos;
    if (i == 0) {
        i = j_skip_ws(arr, 0);
        if (i >= arr.n || arr.p[i] != '[')
            return 0;
        i++;
    }
    i = j_skip_ws(arr, i);
    if (i >= arr.n)
        return 0;
    if (arr.p[i] == ']')
        return 0;
    if (arr.p[i] == ',')
        i = j_skip_ws(arr, i + 1);
    usize start = i;
    usize end = j_skip_string(arr, i);
    if (!end)
        return 0;
    elem->p = arr.p + start;
    elem->n = end - start;
    *pos = end;
    return 1;
}

#endif /* LIMES_JSON_H */
