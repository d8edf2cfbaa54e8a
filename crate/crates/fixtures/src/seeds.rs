//! Initial state of the mock tools.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use flowsmith_core::interp::mocks::{Email, MailboxSeed, Sheet, SpreadsheetSeed};

/// Seven Inbox messages, deliberately stored out of date order.
pub fn mailbox_seed() -> MailboxSeed {
    let mail = |id: &str, from: &str, subject: &str, date: &str| Email {
        id: id.into(),
        folder: "Inbox".into(),
        from: from.into(),
        to: "me@acme.test".into(),
        cc: None,
        subject: subject.into(),
        body: format!("{subject}.\n\nRegards,\n{from}"),
        date: date.into(),
        read: false,
    };
    MailboxSeed {
        messages: vec![
            mail("m1", "ops@acme.test", "Server maintenance window", "2024-03-04T09:15:00Z"),
            mail("m2", "hr@acme.test", "Holiday calendar", "2024-03-11T14:02:00Z"),
            mail("m3", "alice@client.test", "Contract draft", "2024-02-27T08:40:00Z"),
            mail("m4", "bob@acme.test", "Lunch on Friday", "2024-03-08T12:30:00Z"),
            mail("m5", "billing@vendor.test", "Invoice 4471", "2024-03-12T07:55:00Z"),
            mail("m6", "carol@acme.test", "Quarterly figures", "2024-03-01T16:20:00Z"),
            mail("m7", "dave@client.test", "Meeting notes", "2024-03-09T10:05:00Z"),
        ],
    }
}

fn sheet(columns: &[&str], rows: &[&[Value]]) -> Sheet {
    Sheet {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows: rows
            .iter()
            .map(|r| columns.iter().zip(r.iter()).map(|(c, v)| (c.to_string(), v.clone())).collect())
            .collect(),
    }
}

pub fn spreadsheet_seed() -> SpreadsheetSeed {
    let employees = sheet(
        &["Name", "Salary", "Bonus percentage"],
        &[
            &[json!("Ada Park"), json!(52000), json!(5)],
            &[json!("Ben Ortiz"), json!(61500), json!(7.5)],
            &[json!("Chloe Ng"), json!(48250.5), json!(3)],
            &[json!("Dev Rao"), json!(75000), json!(12.25)],
        ],
    );
    let invoices = sheet(
        &["Invoice", "Email", "Amount"],
        &[
            &[json!("INV-1001"), json!("accounts@northwind.test"), json!(1200)],
            &[json!("INV-1002"), json!("pay@contoso.test"), json!(830.4)],
            &[json!("INV-1003"), json!("finance@fabrikam.test"), json!(410)],
        ],
    );
    SpreadsheetSeed {
        workbooks: BTreeMap::from([
            ("EmployeeData.xlsx".to_string(), BTreeMap::from([("Sheet1".to_string(), employees)])),
            ("Invoices.xlsx".to_string(), BTreeMap::from([("Pending".to_string(), invoices)])),
        ]),
    }
}

/// Files of the sandbox file-system root, relative path and content.
pub fn fs_files() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "user/Downloads/Medical/Doctor_Prescription.txt",
            "Northside Family Practice\n\
             Patient: Jordan Miles\n\
             Doctor: Dr. Priya Raman\n\
             Medication: MEDEX\n\
             Date: 2020-03-02\n\
             \n\
             Take one tablet twice daily with food.\n",
        ),
        ("reports/summary.txt", "Week 11: 14 tickets closed, 3 opened. Release 2.4 shipped on Thursday.\n"),
        ("Clients/Inbox/order-118.txt", "Purchase order 118\nClient: Acme\nAmount: 1,250.00\n"),
        ("Clients/Inbox/letter-0412.txt", "Engagement letter\nClient: Globex\nSigned: 2024-04-12\n"),
        ("Clients/Inbox/receipt-77.txt", "Receipt 77\nClient: Initech\nPaid in full.\n"),
        ("Clients/Acme/contract.txt", "Master services agreement between Acme and the firm.\n"),
    ]
}
