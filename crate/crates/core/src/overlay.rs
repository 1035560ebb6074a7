//! SVG overlays: red human box, blue object box, a green line between their
//! centers and the green action names.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::Result;
use crate::geometry::BBox;
use crate::inference::LabelsFile;
use crate::kb::KnowledgeBase;
use crate::scalar::Scalar;

pub const HUMAN_COLOR: &str = "red";
pub const OBJECT_COLOR: &str = "blue";
pub const LINK_COLOR: &str = "green";
const FRAME_COLOR: &str = "#808080";

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayItem<T> {
    pub human_box: BBox<T>,
    pub object_box: BBox<T>,
    pub caption: String,
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn rect<T: Scalar>(out: &mut String, b: &BBox<T>, color: &str) {
    let _ = writeln!(
        out,
        r#"  <rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        b.left().as_f64(),
        b.top().as_f64(),
        b.w.as_f64(),
        b.h.as_f64()
    );
}

/// Renders one image's overlay. Boxes are clipped to the frame; items whose
/// boxes fall entirely outside it are skipped.
pub fn render_overlay<T: Scalar>(width: T, height: T, items: &[OverlayItem<T>]) -> String {
    let (w, h) = (width.as_f64(), height.as_f64());
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(
        out,
        r#"  <rect x="0.0" y="0.0" width="{w:.1}" height="{h:.1}" fill="none" stroke="{FRAME_COLOR}" stroke-width="1"/>"#
    );
    for item in items {
        let (Some(hb), Some(ob)) = (
            item.human_box.clamp_to(width, height),
            item.object_box.clamp_to(width, height),
        ) else {
            continue;
        };
        rect(&mut out, &hb, HUMAN_COLOR);
        rect(&mut out, &ob, OBJECT_COLOR);
        let _ = writeln!(
            out,
            r#"  <line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{LINK_COLOR}" stroke-width="2"/>"#,
            hb.cx.as_f64(),
            hb.cy.as_f64(),
            ob.cx.as_f64(),
            ob.cy.as_f64()
        );
        let tx = (hb.cx.as_f64() + ob.cx.as_f64()) / 2.0;
        let ty = ((hb.cy.as_f64() + ob.cy.as_f64()) / 2.0 - 4.0).max(12.0);
        let _ = writeln!(
            out,
            r#"  <text x="{tx:.1}" y="{ty:.1}" fill="{LINK_COLOR}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            escape(&item.caption)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Action names of a label, comma-separated.
pub fn caption(kb: &KnowledgeBase, hoi_ids: impl IntoIterator<Item = usize>) -> Result<String> {
    let names = hoi_ids
        .into_iter()
        .map(|h| kb.action_name(h).map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    Ok(names.join(", "))
}

/// Overlay items of a labels or ground-truth file grouped by image, in the
/// file's image order.
pub fn items_by_image<T: Scalar>(
    file: &LabelsFile<T>,
    kb: &KnowledgeBase,
) -> Result<BTreeMap<String, Vec<OverlayItem<T>>>> {
    let mut grouped: BTreeMap<String, Vec<OverlayItem<T>>> = file
        .covered_images()
        .into_iter()
        .map(|id| (id, Vec::new()))
        .collect();
    for l in &file.labels {
        grouped
            .entry(l.image_id.clone())
            .or_default()
            .push(OverlayItem {
                human_box: l.human_box,
                object_box: l.object_box,
                caption: caption(kb, l.actions.iter().map(|a| a.hoi_id))?,
            });
    }
    Ok(grouped)
}

/// Frame size covering every box of an image, for when no detections file
/// provides the real dimensions.
pub fn extent_of<T: Scalar>(items: &[OverlayItem<T>]) -> (T, T) {
    items.iter().fold((T::one(), T::one()), |(w, h), it| {
        (
            w.max(it.human_box.right().ceil())
                .max(it.object_box.right().ceil()),
            h.max(it.human_box.bottom().ceil())
                .max(it.object_box.bottom().ceil()),
        )
    })
}
