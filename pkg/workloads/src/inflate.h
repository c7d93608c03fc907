/* zlib/DEFLATE decompressor (RFC 1950/1951 subset: no preset dictionaries).
 *
 * Canonical-code bit-at-a-time decoder in the style of zlib's minimal
 * reference decompressor. Handles stored, fixed-Huffman and dynamic-Huffman
 * blocks and verifies the Adler-32 trailer.
 */
#ifndef LIMES_INFLATE_H
#define LIMES_INFLATE_H

#include "limes_guest.h"

#define INF_OK 0
#define INF_ERR_HEADER -1
#define INF_ERR_BLOCK -2
#define INF_ERR_CODE -3
#define INF_ERR_STORED -4
#define INF_ERR_OUTPUT -5
#define INF_ERR_INPUT -6
#define INF_ERR_DISTANCE -7
#define INF_ERR_CHECKSUM -8

#define INF_MAX_BITS 15
#define INF_MAX_LCODES 286
#define INF_MAX_DCODES 30
#define INF_MAX_CODES (INF_MAX_LCODES + INF_MAX_DCODES)
#define INF_FIXED_LCODES 288

typedef struct {
    u16 count[INF_MAX_BITS + 1];
    u16 sym[INF_FIXED_LCODES];
} inf_huff;

typedef struct {
    const u8 *in;
    usize in_len;
    usize in_pos;
    u8 *out;
    usize out_cap;
    usize out_pos;
    u32 bitbuf;
    int bitcnt;
    int err;
} inf_state;

static inline int inf_bits(inf_state *s, int need) {
    while (s->bitcnt < need) {
        if (s->in_pos >= s->in_len) {
            s->err = INF_ERR_INPUT;
            return 0;
        }
        s->bitbuf |= (u32)s->in[s->in_pos++] << s->bitcnt;
        s->bitcnt += 8;
    }
    int v = (int)(s->bitbuf & ((1u << need) - 1));
    s->bitbuf >>= need;
    s->bitcnt -= need;
    return v;
}

/* Builds a canonical-code table from code lengths; returns the count excess
 * (negative => over-subscribed => invalid). */
static inline int inf_build(inf_huff *h, const u16 *lengths, int n) {
    for (int len = 0; len <= INF_MAX_BITS; len++)
        h->count[len] = 0;
    for (int i = 0; i < n; i++)
        h->count[lengths[i]]++;
    if (h->count[0] == n)
        return 0; /* no codes at all */
    int left = 1;
    for (int len = 1; len <= INF_MAX_BITS; len++) {
        left <<= 1;
        left -= h->count[len];
        if (left < 0)
            return left;
    }
    u16 offs[INF_MAX_BITS + 1];
    offs[1] = 0;
    for (int len = 1; len < INF_MAX_BITS; len++)
        offs[len + 1] = (u16)(offs[len] + h->count[len]);
    for (int i = 0; i < n; i++)
        if (lengths[i] != 0)
            h->sym[offs[lengths[i]]++] = (u16)i;
    return left;
}

static inline int inf_decode(inf_state *s, const inf_huff *h) {
    int code = 0, first = 0, index = 0;
    for (int len = 1; len <= INF_MAX_BITS; len++) {
        code |= inf_bits(s, 1);
        if (s->err)
            return -1;
        int count = h->count[len];
        if (code - first < count)
            return h->sym[index + (code - first)];
        index += count;
        first += count;
        first <<= 1;
        code <<= 1;
    }
    s->err = INF_ERR_CODE;
    return -1;
}

static const u16 inf_lbase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19, 23, 27,
                                  31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
static const u16 inf_lextra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                   2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
static const u16 inf_dbase[30] = {1,    2,    3,    4,    5,    7,     9,     13,   17,   25,
                                  33,   49,   65,   97,   129,  193,   257,   385,  513,  769,
                                  1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
static const u16 inf_dextra[30] = {0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4,  4,  5,  5,  6,
                                   6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

static inline int inf_codes(inf_state *s, const inf_huff *lit, const inf_huff *dist) {
    for (;;) {
        int sym = inf_decode(s, lit);
        if (s->err)
            return s->err;
        if (sym < 0 || sym >= 286)
            return INF_ERR_CODE;
        if (sym < 256) {
            if (s->out_pos >= s->out_cap)
                return INF_ERR_OUTPUT;
            s->out[s->out_pos++] = (u8)sym;
            continue;
        }
        if (sym == 256)
            return INF_OK;
        sym -= 257;
        usize len = inf_lbase[sym] + (usize)inf_bits(s, inf_lextra[sym]);
        if (s->err)
            return s->err;
        int dsym = inf_decode(s, dist);
        if (s->err)
            return s->err;
        if (dsym < 0 || dsym >= 30)
            return INF_ERR_CODE;
        usize d = inf_dbase[dsym] + (usize)inf_bits(s, inf_dextra[dsym]);
        if (s->err)
            return s->err;
        if (d > s->out_pos)
            return INF_ERR_DISTANCE;
        if (s->out_pos + len > s->out_cap)
            return INF_ERR_OUTPUT;
        for (usize i = 0; i < len; i++) {
            s->out[s->out_pos] = s->out[s->out_pos - d];
            s->out_pos++;
        }
    }
}

static inline int inf_stored(inf_state *s) {
    s->bitbuf = 0;
    s->bitcnt = 0;
    if (s->in_pos + 4 > s->in_len)
        return INF_ERR_INPUT;
    usize len = (usize)s->in[s->in_pos] | ((usize)s->in[s->in_pos + 1] << 8);
    usize nlen = (usize)s->in[s->in_pos + 2] | ((usize)s->in[s->in_pos + 3] << 8);
    s->in_pos += 4;
    if ((len ^ 0xffff) != nlen)
        return INF_ERR_STORED;
    if (s->in_pos + len > s->in_len)
        return INF_ERR_INPUT;
    if (s->out_pos + len > s->out_cap)
        return INF_ERR_OUTPUT;
    gmemcpy(s->out + s->out_pos, s->in + s->in_pos, len);
    s->in_pos += len;
    s->out_pos += len;
    return INF_OK;
}

static inline int inf_fixed(inf_state *s) {
    static inf_huff lit, dist;
    static int built = 0;
    if (!built) {
        u16 lengths[INF_FIXED_LCODES];
        for (int i = 0; i < 144; i++)
            lengths[i] = 8;
        for (int i = 144; i < 256; i++)
            lengths[i] = 9;
        for (int i = 256; i < 280; i++)
            lengths[i] = 7;
        for (int i = 280; i < 288; i++)
            lengths[i] = 8;
        inf_build(&lit, lengths, INF_FIXED_LCODES);
        for (int i = 0; i < 30; i++)
            lengths[i] = 5;
        inf_build(&dist, lengths, 30);
        built = 1;
    }
    return inf_codes(s, &lit, &dist);
}

static inline int inf_dynamic(inf_state *s) {
    static const u8 order[19] = {16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15};
    u16 lengths[INF_MAX_CODES];
    inf_huff lit, dist;

    int nlen = inf_bits(s, 5) + 257;
    int ndist = inf_bits(s, 5) + 1;
    int ncode = inf_bits(s, 4) + 4;
    if (s->err)
        return s->err;
    if (nlen > INF_MAX_LCODES || ndist > INF_MAX_DCODES)
        return INF_ERR_BLOCK;

    for (int i = 0; i < 19; i++)
        lengths[i] = 0;
    for (int i = 0; i < ncode; i++) {
        lengths[order[i]] = (u16)inf_bits(s, 3);
        if (s->err)
            return s->err;
    }
    inf_huff cl;
    if (inf_build(&cl, lengths, 19) != 0)
        return INF_ERR_BLOCK;

    int i = 0;
    while (i < nlen + ndist) {
        int sym = inf_decode(s, &cl);
        if (s->err)
            return s->err;
        if (sym < 16) {
            lengths[i++] = (u16)sym;
        } else {
            int rep;
            u16 val = 0;
            if (sym == 16) {
                if (i == 0)
                    return INF_ERR_BLOCK;
                val = lengths[i - 1];
                rep = 3 + inf_bits(s, 2);
            } else if (sym == 17) {
                rep = 3 + inf_bits(s, 3);
            } else {
                rep = 11 + inf_bits(s, 7);
            }
            if (s->err)
                return s->err;
            if (i + rep > nlen + ndist)
                return INF_ERR_BLOCK;
            while (rep-- > 0)
                lengths[i++] = val;
        }
    }
    if (lengths[256] == 0)
        return INF_ERR_BLOCK; /* no end-of-block code */

    int excess = inf_build(&lit, lengths, nlen);
    if (excess < 0)
        return INF_ERR_BLOCK;
    excess = inf_build(&dist, lengths + nlen, ndist);
    if (excess < 0)
        return INF_ERR_BLOCK;
    return inf_codes(s, &lit, &dist);
}

static inline u32 inf_adler32(const u8 *data, usize len) {
    u32 a = 1, b = 0;
    usize i = 0;
    while (i < len) {
        usize chunk = len - i;
        if (chunk > 5552)
            chunk = 5552;
        for (usize k = 0; k < chunk; k++) {
            a += data[i + k];
            b += a;
        }
        a %= 65521;
        b %= 65521;
        i += chunk;
    }
    return (b << 16) | a;
}

/* Inflates a full zlib stream into dst; *written gets the output length. */
static inline int zlib_inflate(const u8 *src, usize src_len, u8 *dst, usize dst_cap, usize *written) {
    if (src_len < 6)
        return INF_ERR_HEADER;
    u8 cmf = src[0], flg = src[1];
    if ((cmf & 0x0f) != 8)
        return INF_ERR_HEADER;
    if (((u32)cmf * 256 + flg) % 31 != 0)
        return INF_ERR_HEADER;
    if (flg & 0x20)
        return INF_ERR_HEADER; /* preset dictionary unsupported */

    inf_state s;
    s.in = src;
    s.in_len = src_len - 4; /* trailing adler32 */
    s.in_pos = 2;
    s.out = dst;
    s.out_cap = dst_cap;
    s.out_pos = 0;
    s.bitbuf = 0;
    s.bitcnt = 0;
    s.err = 0;

    int final;
    do {
        final = inf_bits(&s, 1);
        int type = inf_bits(&s, 2);
        if (s.err)
            return s.err;
        int err;
        if (type == 0)
            err = inf_stored(&s);
        else if (type == 1)
            err = inf_fixed(&s);
        else if (type == 2)
            err = inf_dynamic(&s);
        else
            return INF_ERR_BLOCK;
        if (err != INF_OK)
            return err;
    } while (!final);

    u32 expect = ((u32)src[src_len - 4] << 24) | ((u32)src[src_len - 3] << 16) |
                 ((u32)src[src_len - 2] << 8) | (u32)src[src_len - 1];
    if (inf_adler32(dst, s.out_pos) != expect)
        return INF_ERR_CHECKSUM;
    *written = s.out_pos;
    return INF_OK;
}

#endif /* LIMES_INFLATE_H */
