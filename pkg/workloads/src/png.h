/* PNG reader/writer for the image workload.
 *
 * Decode accepts 8-bit/channel RGB (color type 2), non-interlaced images with
 * any zlib-compressed IDAT and all five row filters. Encode always emits the
 * canonical deterministic form shared with the host oracle:
 *   color type 2, bit depth 8, filter byte 0 on every row, one IDAT holding a
 *   zlib stream with header 78 01 and stored (uncompressed) deflate blocks of
 *   at most 65535 bytes.
 * Two independent encoders following this layout produce identical bytes.
 */
#ifndef LIMES_PNG_H
#define LIMES_PNG_H

#include "inflate.h"
#include "limes_guest.h"

static u32 png_crc_table[256];
static int png_crc_ready = 0;

static inline u32 png_crc32(u32 crc, const u8 *data, usize len) {
    if (!png_crc_ready) {
        for (u32 i = 0; i < 256; i++) {
            u32 c = i;
            for (int k = 0; k < 8; k++)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            png_crc_table[i] = c;
        }
        png_crc_ready = 1;
    }
    crc ^= 0xFFFFFFFFu;
    for (usize i = 0; i < len; i++)
        crc = png_crc_table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

static inline u32 png_be32(const u8 *p) {
    return ((u32)p[0] << 24) | ((u32)p[1] << 16) | ((u32)p[2] << 8) | (u32)p[3];
}

static inline void png_put_be32(u8 *p, u32 v) {
    p[0] = (u8)(v >> 24);
    p[1] = (u8)(v >> 16);
    p[2] = (u8)(v >> 8);
    p[3] = (u8)v;
}

static const u8 png_sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

typedef struct {
    u32 width;
    u32 height;
    u8 *pixels; /* RGB, 3 bytes per pixel, row-major */
} png_image;

static inline int png_paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = p > a ? p - a : a - p;
    int pb = p > b ? p - b : b - p;
    int pc = p > c ? p - c : c - p;
    if (pa <= pb && pa <= pc)
        return a;
    if (pb <= pc)
        return b;
    return c;
}

/* Returns 0 on success, or a static error string. */
static inline const char *png_decode(const u8 *data, usize len, png_image *out) {
    if (len < 8)
        return "not a png";
    for (int i = 0; i < 8; i++)
        if (data[i] != png_sig[i])
            return "not a png";

    u32 w = 0, h = 0;
    int seen_ihdr = 0, seen_iend = 0;
    usize idat_total = 0;
    usize pos = 8;

    /* first pass: validate chunk framing + CRCs, collect IHDR and IDAT size */
    while (pos + 12 <= len) {
        u32 clen = png_be32(data + pos);
        if (pos + 12 + clen > len)
            return "truncated chunk";
        const u8 *ctype = data + pos + 4;
        const u8 *cdata = data + pos + 8;
        u32 crc = png_be32(cdata + clen);
        if (png_crc32(0, ctype, 4 + clen) != crc)
            return "chunk crc mismatch";
        if (ctype[0] == 'I' && ctype[1] == 'H' && ctype[2] == 'D' && ctype[3] == 'R') {
            if (clen != 13)
                return "bad ihdr";
            w = png_be32(cdata);
            h = png_be32(cdata + 4);
            if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15)
                return "bad dimensions";
            if (cdata[8] != 8)
                return "unsupported bit depth (want 8)";
            if (cdata[9] != 2)
                return "unsupported color type (want rgb)";
            if (cdata[10] != 0 || cdata[11] != 0)
                return "bad ihdr";
            if (cdata[12] != 0)
                return "interlaced png unsupported";
            seen_ihdr = 1;
        } else if (ctype[0] == 'I' && ctype[1] == 'D' && ctype[2] == 'A' && ctype[3] == 'T') {
            idat_total += clen;
        } else if (ctype[0] == 'I' && ctype[1] == 'E' && ctype[2] == 'N' && ctype[3] == 'D') {
            seen_iend = 1;
            break;
        }
        pos += 12 + clen;
    }
    if (!seen_ihdr || !seen_iend || idat_total == 0)
        return "missing ihdr/idat/iend";

    u8 *zdata = guest_alloc(idat_total);
    if (!zdata)
        return "out of memory";
    usize zoff = 0;
    pos = 8;
    while (pos + 12 <= len) {
        u32 clen = png_be32(data + pos);
        const u8 *ctype = data + pos + 4;
        if (ctype[0] == 'I' && ctype[1] == 'D' && ctype[2] == 'A' && ctype[3] == 'T') {
            gmemcpy(zdata + zoff, data + pos + 8, clen);
            zoff += clen;
        }
        if (ctype[0] == 'I' && ctype[1] == 'E' && ctype[2] == 'N' && ctype[3] == 'D')
            break;
        pos += 12 + clen;
    }

    usize stride = 1 + (usize)w * 3;
    usize raw_len = stride * h;
    u8 *raw = guest_alloc(raw_len);
    if (!raw)
        return "out of memory";
    usize produced = 0;
    if (zlib_inflate(zdata, idat_total, raw, raw_len, &produced) != INF_OK)
        return "bad zlib stream";
    if (produced != raw_len)
        return "wrong raw size";

    u8 *pix = guest_alloc((usize)w * h * 3);
    if (!pix)
        return "out of memory";
    for (u32 y = 0; y < h; y++) {
        u8 filter = raw[y * stride];
        u8 *cur = raw + y * stride + 1;
        const u8 *up = y > 0 ? raw + (y - 1) * stride + 1 : 0;
        usize rb = (usize)w * 3;
        switch (filter) {
        case 0:
            break;
        case 1:
            for (usize i = 3; i < rb; i++)
                cur[i] = (u8)(cur[i] + cur[i - 3]);
            break;
        case 2:
            if (up)
                for (usize i = 0; i < rb; i++)
                    cur[i] = (u8)(cur[i] + up[i]);
            break;
        case 3:
            for (usize i = 0; i < rb; i++) {
                int a = i >= 3 ? cur[i - 3] : 0;
                int b = up ? up[i] : 0;
                cur[i] = (u8)(cur[i] + ((a + b) >> 1));
            }
            break;
        case 4:
            for (usize i = 0; i < rb; i++) {
                int a = i >= 3 ? cur[i - 3] : 0;
                int b = up ? up[i] : 0;
                int c = (up && i >= 3) ? up[i - 3] : 0;
                cur[i] = (u8)(cur[i] + png_paeth(a, b, c));
            }
            break;
        default:
            return "bad row filter";
        }
        gmemcpy(pix + (usize)y * w * 3, cur, rb);
    }
    out->width = w;
    out->height = h;
    out->pixels = pix;
    return 0;
}

/* Canonical encode; returns 0 on success. */
static inline const char *png_encode(const png_image *img, u8 **out, usize *out_len) {
    u32 w = img->width, h = img->height;
    usize rb = (usize)w * 3;
    usize raw_len = ((usize)rb + 1) * h;
    u8 *raw = guest_alloc(raw_len);
    if (!raw)
        return "out of memory";
    for (u32 y = 0; y < h; y++) {
        raw[y * (rb + 1)] = 0;
        gmemcpy(raw + y * (rb + 1) + 1, img->pixels + (usize)y * rb, rb);
    }

    usize nblocks = (raw_len + 65534) / 65535;
    if (nblocks == 0)
        nblocks = 1;
    usize zlen = 2 + nblocks * 5 + raw_len + 4;
    usize total = 8 + (12 + 13) + (12 + zlen) + 12;
    u8 *png = guest_alloc(total);
    if (!png)
        return "out of memory";

    usize o = 0;
    gmemcpy(png + o, png_sig, 8);
    o += 8;

    /* IHDR */
    png_put_be32(png + o, 13);
    gmemcpy(png + o + 4, "IHDR", 4);
    png_put_be32(png + o + 8, w);
    png_put_be32(png + o + 12, h);
    png[o + 16] = 8; /* bit depth */
    png[o + 17] = 2; /* rgb */
    png[o + 18] = 0;
    png[o + 19] = 0;
    png[o + 20] = 0;
    png_put_be32(png + o + 21, png_crc32(0, png + o + 4, 17));
    o += 25;

    /* IDAT */
    png_put_be32(png + o, (u32)zlen);
    gmemcpy(png + o + 4, "IDAT", 4);
    usize z = o + 8;
    png[z++] = 0x78;
    png[z++] = 0x01;
    usize off = 0;
    while (off < raw_len || raw_len == 0) {
        usize n = raw_len - off;
        if (n > 65535)
            n = 65535;
        int last = (off + n == raw_len);
        png[z++] = last ? 1 : 0;
        png[z++] = (u8)(n & 0xff);
        png[z++] = (u8)(n >> 8);
        png[z++] = (u8)(~n & 0xff);
        png[z++] = (u8)((~n >> 8) & 0xff);
        gmemcpy(png + z, raw + off, n);
        z += n;
        off += n;
        if (last)
            break;
    }
    u32 adler = inf_adler32(raw, raw_len);
    png_put_be32(png + z, adler);
    z += 4;
    png_put_be32(png + z, png_crc32(0, png + o + 4, 4 + zlen));
    z += 4;
    o = z;

    /* IEND */
    png_put_be32(png + o, 0);
    gmemcpy(png + o + 4, "IEND", 4);
    png_put_be32(png + o + 8, png_crc32(0, png + o + 4, 4));
    o += 12;

    *out = png;
    *out_len = o;
    return 0;
}

#endif /* LIMES_PNG_H */
