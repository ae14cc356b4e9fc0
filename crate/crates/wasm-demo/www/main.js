import init, { complexityProfile, windowBreakdown, tercileLabels } from "./pkg/tslex_wasm.js";

const $ = (id) => document.getElementById(id);
const LABEL_COLORS = { low: "#2166ac", medium: "#999", high: "#b2182b" };

let values = [];
let profile = null;
let labels = [];
let selected = 0;

// mulberry32
function rng(seed) {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function generate(kind, n, seed) {
  const r = rng(seed);
  const out = [];
  let x = 0;
  for (let i = 0; i < n; i++) {
    switch (kind) {
      case "sine":
        out.push(Math.sin(i / 6) + 0.3 * (r() - 0.5));
        break;
      case "walk":
        x += r() - 0.5;
        out.push(x);
        break;
      case "steps":
        out.push((Math.floor(i / 12) % 2) + 0.05 * r());
        break;
      default: {
        const irregular = Math.floor(i / 60) % 2 === 1;
        out.push(irregular ? r() : 0.5 + 0.02 * (r() - 0.5));
      }
    }
  }
  return out.map((v) => Number(v.toFixed(4)));
}

function parseValues(text) {
  return text
    .split(/[\s,;]+/)
    .filter((s) => s.length)
    .map(Number);
}

function setup(canvas) {
  const ratio = window.devicePixelRatio || 1;
  const w = canvas.clientWidth;
  const h = canvas.clientHeight;
  canvas.width = w * ratio;
  canvas.height = h * ratio;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(ratio, 0, 0, ratio, 0, 0);
  ctx.clearRect(0, 0, w, h);
  return { ctx, w, h };
}

function scale(lo, hi, a, b) {
  const span = hi - lo || 1;
  return (v) => a + ((v - lo) / span) * (b - a);
}

function line(ctx, xs, ys, color, width = 1.5) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(x, ys[i]) : ctx.moveTo(x, ys[i])));
  ctx.stroke();
}

function drawSeries(bd) {
  const { ctx, w, h } = setup($("series"));
  if (!values.length) return;
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const x = scale(0, values.length - 1, 6, w - 6);
  const y = scale(lo, hi, h - 8, 8);
  const m = Number($("window").value);
  if (profile && profile.starts.length) {
    const s = profile.starts[selected];
    ctx.fillStyle = "rgba(117,112,179,0.12)";
    ctx.fillRect(x(s), 0, x(s + m - 1) - x(s), h);
  }
  line(ctx, values.map((_, i) => x(i)), values.map(y), "#333", 1);
  if (bd && profile) {
    const s = profile.starts[selected];
    ctx.fillStyle = "#d95f02";
    for (const p of bd.points_of_return) {
      ctx.beginPath();
      ctx.arc(x(s + p), y(values[s + p]), 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function drawProfile() {
  const { ctx, w, h } = setup($("profile"));
  if (!profile || !profile.starts.length) return;
  const starts = profile.starts;
  const x = scale(0, values.length - 1, 6, w - 6);
  const y = scale(0, 1, h - 8, 8);
  const xs = starts.map(x);
  line(ctx, xs, profile.fluctuation.map(y), "#1b9e77", 1);
  line(ctx, xs, profile.distribution.map(y), "#7570b3", 1);
  line(ctx, xs, profile.complexity.map(y), "#111", 2);
  if (labels.length) {
    starts.forEach((s, i) => {
      ctx.fillStyle = LABEL_COLORS[labels[i]];
      ctx.fillRect(x(s) - 1, h - 5, 3, 5);
    });
  }
  ctx.strokeStyle = "#d95f02";
  ctx.beginPath();
  ctx.moveTo(x(starts[selected]), 0);
  ctx.lineTo(x(starts[selected]), h);
  ctx.stroke();
}

function drawSorted(bd) {
  const { ctx, w, h } = setup($("sorted"));
  if (!bd) return;
  const lo = bd.ideal[0];
  const hi = bd.ideal[bd.ideal.length - 1];
  const x = scale(0, bd.sorted.length - 1, 10, w - 10);
  const y = scale(lo, hi, h - 8, 8);
  const xs = bd.sorted.map((_, i) => x(i));
  line(ctx, xs, bd.ideal.map(y), "#aaa", 1);
  ctx.fillStyle = "#7570b3";
  bd.sorted.forEach((v, i) => {
    ctx.beginPath();
    ctx.arc(xs[i], y(v), 2.5, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function domain() {
  if ($("auto-domain").checked) return [NaN, NaN];
  return [Number($("dmin").value), Number($("dmax").value)];
}

function inspect() {
  let bd = null;
  if (profile && profile.starts.length && profile.domain) {
    const m = Number($("window").value);
    const s = profile.starts[selected];
    const [lo, hi] = profile.domain;
    bd = JSON.parse(windowBreakdown(Float64Array.from(values.slice(s, s + m)), lo, hi));
    $("bd-start").textContent = `sample ${s}`;
    $("bd-f").textContent = bd.fluctuation.toFixed(4);
    $("bd-d").textContent = bd.distribution.toFixed(4);
    $("bd-c").textContent = bd.complexity.toFixed(4);
    $("bd-p").textContent = bd.points_of_return.length;
  }
  drawSeries(bd);
  drawProfile();
  drawSorted(bd);
}

function recompute() {
  $("error").textContent = "";
  values = parseValues($("values").value);
  const m = Number($("window").value);
  $("window-out").textContent = m;
  try {
    const [lo, hi] = domain();
    profile = JSON.parse(complexityProfile(Float64Array.from(values), m, Number($("step").value), lo, hi));
    if (profile.degenerate) $("error").textContent = "Zero-width domain: all values are 0.";
    const t = JSON.parse(tercileLabels(Float64Array.from(profile.complexity)));
    labels = t.labels;
    $("e1").textContent = t.edges[0].toFixed(4);
    $("e2").textContent = t.edges[1].toFixed(4);
    $("n-low").textContent = t.counts[0];
    $("n-medium").textContent = t.counts[1];
    $("n-high").textContent = t.counts[2];
    if (t.dropped) $("error").textContent = "Profile is constant: no tercile split.";
  } catch (e) {
    profile = null;
    labels = [];
    $("error").textContent = String(e.message || e);
  }
  selected = profile ? Math.min(selected, Math.max(0, profile.starts.length - 1)) : 0;
  inspect();
}

function regenerate() {
  const v = generate($("generator").value, Number($("length").value), Number($("seed").value));
  $("values").value = v.join(", ");
  recompute();
}

function pick(event) {
  if (!profile || !profile.starts.length) return;
  const rect = $("profile").getBoundingClientRect();
  const sample = ((event.clientX - rect.left - 6) / (rect.width - 12)) * (values.length - 1);
  let best = 0;
  profile.starts.forEach((s, i) => {
    if (Math.abs(s - sample) < Math.abs(profile.starts[best] - sample)) best = i;
  });
  selected = best;
  inspect();
}

await init();
$("generate").addEventListener("click", regenerate);
$("values").addEventListener("change", recompute);
for (const id of ["window", "step", "dmin", "dmax"]) $(id).addEventListener("input", recompute);
$("auto-domain").addEventListener("change", () => {
  const fixed = !$("auto-domain").checked;
  $("dmin").disabled = $("dmax").disabled = !fixed;
  if (fixed && values.length) {
    $("dmin").value = Math.min(...values);
    $("dmax").value = Math.max(...values);
  }
  recompute();
});
$("profile").addEventListener("click", pick);
window.addEventListener("resize", inspect);
regenerate();
