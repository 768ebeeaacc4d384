//! A small hand-written dataset in WikiHop layout, used by tests and docs.

/// Three support documents bridging "get ready" to its record label through
/// the artist and the label founder.
pub const RECORD_LABEL_JSON: &str = r#"[
  {
    "id": "record_label_example",
    "query": "record_label get ready",
    "answer": "bad boy records",
    "candidates": ["bad boy records", "record label", "rock music"],
    "supports": [
      "Mason Durell Betha (born August 27, 1977), better known by stage name Mase (formerly often stylized Ma$e or MA$E), is an American hip hop recording artist and minister. He is best known for being signed to Sean \"Diddy\" Combs's label Bad Boy Records.",
      "\"Get Ready\" was the only single released from Mase's second album, Double Up. It was released on May 25, 1999, produced by Sean \"Puffy\" Combs, Teddy Riley and Andreao \"Fanatic\" Heard and featured R&B group, Blackstreet, it contains a sample of \"A Night to Remember\", performed by Shalamar.",
      "Bad Boy Entertainment (also known as Bad Boy Records) is an American record label founded in 1993 by Sean Combs."
    ]
  }
]"#;
