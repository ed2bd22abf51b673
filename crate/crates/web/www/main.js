import init, { envelopeTable, langevinDemo, gaussianWp } from "./pkg/fpsens_web.js";

const PAD = { l: 60, r: 15, t: 15, b: 35 };

function values(section) {
  const v = {};
  for (const input of section.querySelectorAll("input")) v[input.name] = Number(input.value);
  return v;
}

function plot(canvas, series, { logX = false } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const pts = series.flatMap((s) => s.points.concat(s.band ? s.band.flat() : []));
  const fx = logX ? Math.log10 : (x) => x;
  const xs = pts.map((p) => fx(p[0]));
  const ys = pts.map((p) => p[1]).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(0, ...ys), Math.max(...ys) * 1.05 || 1];
  const X = (x) => PAD.l + ((fx(x) - x0) / (x1 - x0 || 1)) * (w - PAD.l - PAD.r);
  const Y = (y) => h - PAD.b - ((y - y0) / (y1 - y0 || 1)) * (h - PAD.t - PAD.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.beginPath();
  ctx.moveTo(PAD.l, PAD.t);
  ctx.lineTo(PAD.l, h - PAD.b);
  ctx.lineTo(w - PAD.r, h - PAD.b);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(y.toPrecision(3), 5, Y(y) + 4);
    const x = x0 + ((x1 - x0) * i) / 4;
    const label = logX ? Math.round(10 ** x) : x.toPrecision(3);
    ctx.fillText(label, PAD.l + ((x - x0) / (x1 - x0 || 1)) * (w - PAD.l - PAD.r) - 10, h - PAD.b + 15);
  }

  for (const s of series) {
    ctx.strokeStyle = s.color;
    if (s.band) {
      ctx.beginPath();
      for (const [[x, lo], [, hi]] of s.band) {
        ctx.moveTo(X(x), Y(lo));
        ctx.lineTo(X(x), Y(hi));
      }
      ctx.stroke();
    }
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i ? ctx.lineTo(X(x), Y(y)) : ctx.moveTo(X(x), Y(y))));
    ctx.stroke();
    if (s.dots) {
      ctx.fillStyle = s.color;
      for (const [x, y] of s.points) ctx.fillRect(X(x) - 2, Y(y) - 2, 4, 4);
    }
  }
}

function rows(flat, width) {
  const out = [];
  for (let i = 0; i < flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

function guarded(section, f) {
  const out = section.querySelector(".out");
  return () => {
    try {
      out.textContent = f(values(section), section.querySelector("canvas"));
    } catch (e) {
      out.textContent = `error: ${e.message ?? e}`;
    }
  };
}

function envelopes(v, canvas) {
  const table = rows(envelopeTable(v.l1, v.l2, v.m, v.k, v.l3, v.p, v.da, v.t, 200), 3);
  plot(canvas, [
    { color: "#c0392b", points: table.map((r) => [r[0], r[1]]) },
    { color: "#2471a3", points: table.map((r) => [r[0], r[2]]) },
  ]);
  const last = table[table.length - 1];
  return `t = ${last[0]}: general ${last[1].toPrecision(6)}, Langevin ${last[2].toPrecision(6)}`;
}

function langevin(v, canvas) {
  const steps = Math.max(1, Math.round(v.t / 1e-3));
  const table = rows(langevinDemo(v.k, v.da, v.beta, v.betap, v.n, v.t, steps, 25, v.seed), 5);
  plot(canvas, [
    { color: "#222", dots: true, points: table.map((r) => [r[0], r[1]]), band: table.map((r) => [[r[0], r[1] - 3 * r[2]], [r[0], r[1] + 3 * r[2]]]) },
    { color: "#27ae60", points: table.map((r) => [r[0], r[3]]) },
    { color: "#2471a3", points: table.map((r) => [r[0], r[4]]) },
  ]);
  const last = table[table.length - 1];
  return `t = ${last[0]}: simulated ${last[1].toPrecision(5)} ± ${last[2].toPrecision(2)}, exact ${last[3].toPrecision(5)}, envelope ${last[4].toPrecision(5)}`;
}

function gaussian(v, canvas) {
  const ns = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384];
  const res = ns.map((n) => [n, ...gaussianWp(v.m1, v.s1, v.m2, v.s2, v.p, n, v.seed)]);
  plot(canvas, [
    { color: "#222", dots: true, points: res.map((r) => [r[0], r[1]]) },
    { color: "#27ae60", points: res.map((r) => [r[0], r[2]]) },
  ], { logX: true });
  const last = res[res.length - 1];
  return `n = ${last[0]}: empirical ${last[1].toPrecision(6)}, exact ${last[2].toPrecision(6)}`;
}

await init();
for (const [id, f] of [["envelopes", envelopes], ["langevin", langevin], ["gaussian", gaussian]]) {
  const section = document.getElementById(id);
  const run = guarded(section, f);
  section.querySelector("button").addEventListener("click", run);
  run();
}
